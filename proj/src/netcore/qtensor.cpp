#include "cimsec/netcore/qtensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cimsec::netcore {

std::vector<double> QTensor::dequantized() const {
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = dequant(i);
  return out;
}

void QTensor::validate() const {
  if (bits < 1 || bits > 16) throw std::invalid_argument("QTensor: bits out of range");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("QTensor: scale must be > 0");
  const std::size_t expected =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                      [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
  if (expected != codes.size()) throw std::invalid_argument("QTensor: shape/code count mismatch");
  const unsigned limit = 1u << bits;
  for (auto c : codes) {
    if (c >= limit) throw std::invalid_argument("QTensor: code exceeds 2^bits");
  }
}

double weight_step(double max_abs, int bits) {
  if (!(max_abs > 0.0)) return 1.0;
  return 2.0 * max_abs / static_cast<double>((1 << bits) - 1);
}

QTensor quantize_weights_with_step(std::span<const double> w, int bits, double step,
                                   std::vector<int> shape) {
  if (w.empty()) throw std::invalid_argument("quantize_weights: empty array");
  if (bits < 2 || bits > 8) throw std::invalid_argument("quantize_weights: bits must be in 2..8");
  if (!(step > 0.0)) throw std::invalid_argument("quantize_weights: step must be > 0");
  QTensor q;
  q.bits = bits;
  q.scale = step;
  q.zero_code = 1 << (bits - 1);
  q.shape = shape.empty() ? std::vector<int>{static_cast<int>(w.size())} : std::move(shape);
  q.codes.resize(w.size());
  const double lo = -static_cast<double>(q.zero_code);
  const double hi = static_cast<double>(q.zero_code - 1);
  for (std::size_t i = 0; i < w.size(); ++i) {
    // std::round breaks ties away from zero.
    const double level = std::clamp(std::round(w[i] / step), lo, hi);
    q.codes[i] = static_cast<std::uint16_t>(static_cast<int>(level) + q.zero_code);
  }
  q.validate();
  return q;
}

QTensor quantize_weights(std::span<const double> w, int bits, std::vector<int> shape) {
  if (w.empty()) throw std::invalid_argument("quantize_weights: empty array");
  double s = 0.0;
  for (double v : w) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize_weights: non-finite weight");
    s = std::max(s, std::abs(v));
  }
  return quantize_weights_with_step(w, bits, weight_step(s, bits), std::move(shape));
}

QTensor quantize_activations(std::span<const double> a) {
  QTensor q;
  q.bits = kActivationBits;
  q.zero_code = 0;
  q.shape = {static_cast<int>(a.size())};
  q.codes.resize(a.size());
  double m = 0.0;
  for (double v : a) {
    if (v < 0.0 || std::isnan(v)) {
      throw std::invalid_argument("quantize_activations: negative input " + std::to_string(v));
    }
    m = std::max(m, v);
  }
  const double top = static_cast<double>((1 << kActivationBits) - 1);
  q.scale = m > 0.0 ? m / top : 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    q.codes[i] = static_cast<std::uint16_t>(std::min(top, std::round(a[i] / q.scale)));
  }
  return q;
}

}  // namespace cimsec::netcore
