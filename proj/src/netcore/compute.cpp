#include "cimsec/netcore/compute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cimsec::netcore {

QuantizedModel quantize_model(const NetworkSpec& net, const FloatModel& model) {
  model.validate(net);
  QuantizedModel q;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    q.weights.push_back(quantize_weights(model.weights[i], l.weight_bits, {l.c_out, l.rows()}));
    q.biases.push_back(model.biases[i]);
  }
  return q;
}

namespace {

template <typename T>
void gather(const LayerSpec& l, std::span<const T> input, std::span<T> cols) {
  const int rows = l.rows();
  const int pad1 = l.k1 / 2;
  const int pad2 = l.k2 / 2;
  for (int y = 0; y < l.h_in; ++y) {
    for (int x = 0; x < l.w_in; ++x) {
      T* dst = cols.data() + static_cast<std::size_t>(y * l.w_in + x) * rows;
      for (int ky = 0; ky < l.k1; ++ky) {
        const int sy = y + ky - pad1;
        for (int kx = 0; kx < l.k2; ++kx) {
          const int sx = x + kx - pad2;
          T* d = dst + (ky * l.k2 + kx) * l.c_in;
          if (sy < 0 || sy >= l.h_in || sx < 0 || sx >= l.w_in) {
            std::fill(d, d + l.c_in, T{});
            continue;
          }
          for (int c = 0; c < l.c_in; ++c) {
            d[c] = input[(static_cast<std::size_t>(c) * l.h_in + sy) * l.w_in + sx];
          }
        }
      }
    }
  }
}

}  // namespace

void im2col(const LayerSpec& l, std::span<const double> input, std::span<double> cols) {
  gather<double>(l, input, cols);
}

void im2col_codes(const LayerSpec& l, std::span<const std::uint16_t> input,
                  std::span<std::uint16_t> cols) {
  gather<std::uint16_t>(l, input, cols);
}

void col2im_add(const LayerSpec& l, std::span<const double> dcols, std::span<double> dinput) {
  const int rows = l.rows();
  const int pad1 = l.k1 / 2;
  const int pad2 = l.k2 / 2;
  for (int y = 0; y < l.h_in; ++y) {
    for (int x = 0; x < l.w_in; ++x) {
      const double* src = dcols.data() + static_cast<std::size_t>(y * l.w_in + x) * rows;
      for (int ky = 0; ky < l.k1; ++ky) {
        const int sy = y + ky - pad1;
        if (sy < 0 || sy >= l.h_in) continue;
        for (int kx = 0; kx < l.k2; ++kx) {
          const int sx = x + kx - pad2;
          if (sx < 0 || sx >= l.w_in) continue;
          const double* s = src + (ky * l.k2 + kx) * l.c_in;
          for (int c = 0; c < l.c_in; ++c) {
            dinput[(static_cast<std::size_t>(c) * l.h_in + sy) * l.w_in + sx] += s[c];
          }
        }
      }
    }
  }
}

void finish_layer(const NetworkSpec& net, std::size_t index, LayerTrace& t) {
  const auto& l = net.layers[index];
  const bool last = index + 1 == net.layers.size();
  std::vector<double> act = t.pre;
  if (!last) {
    for (auto& v : act) v = v > 0.0 ? v : 0.0;
  }
  if (!net.pool_after[index]) {
    t.out = std::move(act);
    t.pool_arg.clear();
    return;
  }
  const int ho = l.h_in / 2;
  const int wo = l.w_in / 2;
  t.out.assign(static_cast<std::size_t>(l.c_out) * ho * wo, 0.0);
  t.pool_arg.assign(t.out.size(), 0);
  for (int c = 0; c < l.c_out; ++c) {
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        std::int32_t best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::int32_t>((c * l.h_in + 2 * y + dy) * l.w_in + 2 * x + dx);
            if (act[idx] > best_v) {
              best_v = act[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * ho + y) * wo + x;
        t.out[o] = best_v;
        t.pool_arg[o] = best;
      }
    }
  }
}

std::vector<double> forward_float(const NetworkSpec& net, const FloatModel& model,
                                  std::span<const double> image, Trace* trace) {
  if (image.size() != net.input_size()) throw std::invalid_argument("forward: input size mismatch");
  Trace local;
  Trace& t = trace ? *trace : local;
  t.layers.resize(net.layers.size());
  std::span<const double> input = image;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    auto& lt = t.layers[i];
    const int rows = l.rows();
    const int pos = l.positions();
    lt.cols.resize(static_cast<std::size_t>(rows) * pos);
    im2col(l, input, lt.cols);
    lt.pre.resize(static_cast<std::size_t>(l.c_out) * pos);
    const auto& w = model.weights[i];
    for (int co = 0; co < l.c_out; ++co) {
      const double* wr = w.data() + static_cast<std::size_t>(co) * rows;
      for (int p = 0; p < pos; ++p) {
        const double* cr = lt.cols.data() + static_cast<std::size_t>(p) * rows;
        double s = 0.0;
        for (int r = 0; r < rows; ++r) s += wr[r] * cr[r];
        lt.pre[static_cast<std::size_t>(co) * pos + p] = s + model.biases[i][co];
      }
    }
    finish_layer(net, i, lt);
    input = lt.out;
  }
  return t.layers.back().out;
}

std::vector<double> forward_quantized(const NetworkSpec& net, const QuantizedModel& model,
                                      std::span<const double> image, Trace* trace) {
  if (image.size() != net.input_size()) throw std::invalid_argument("forward: input size mismatch");
  Trace local;
  Trace& t = trace ? *trace : local;
  t.layers.resize(net.layers.size());
  std::span<const double> input = image;
  std::vector<std::uint16_t> codes;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    auto& lt = t.layers[i];
    const int rows = l.rows();
    const int pos = l.positions();
    const QTensor act = quantize_activations(input);
    codes.resize(static_cast<std::size_t>(rows) * pos);
    im2col_codes(l, act.codes, codes);
    lt.cols.resize(codes.size());
    for (std::size_t k = 0; k < codes.size(); ++k) lt.cols[k] = codes[k] * act.scale;

    const QTensor& qw = model.weights[i];
    std::vector<int> sw(qw.size());
    for (std::size_t k = 0; k < sw.size(); ++k) sw[k] = qw.signed_value(k);
    lt.pre.resize(static_cast<std::size_t>(l.c_out) * pos);
    for (int co = 0; co < l.c_out; ++co) {
      const int* wr = sw.data() + static_cast<std::size_t>(co) * rows;
      for (int p = 0; p < pos; ++p) {
        const std::uint16_t* cr = codes.data() + static_cast<std::size_t>(p) * rows;
        std::int64_t acc = 0;
        for (int r = 0; r < rows; ++r) acc += static_cast<std::int64_t>(wr[r]) * cr[r];
        lt.pre[static_cast<std::size_t>(co) * pos + p] =
            layer_output(acc, 1.0, qw.scale, act.scale, model.biases[i][co]);
      }
    }
    finish_layer(net, i, lt);
    input = lt.out;
  }
  return t.layers.back().out;
}

Gradients Gradients::zeros_like(const FloatModel& model) {
  Gradients g;
  for (const auto& w : model.weights) g.weights.emplace_back(w.size(), 0.0);
  for (const auto& b : model.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

void Gradients::clear() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

void backward(const NetworkSpec& net, const std::vector<std::vector<double>>& weights,
              const Trace& trace, std::span<const double> dlogits, Gradients& grads) {
  std::vector<double> dout(dlogits.begin(), dlogits.end());
  for (std::size_t ii = net.layers.size(); ii-- > 0;) {
    const auto& l = net.layers[ii];
    const auto& lt = trace.layers[ii];
    const bool last = ii + 1 == net.layers.size();
    const int rows = l.rows();
    const int pos = l.positions();

    std::vector<double> dpre(lt.pre.size(), 0.0);
    if (net.pool_after[ii]) {
      for (std::size_t o = 0; o < dout.size(); ++o) dpre[lt.pool_arg[o]] += dout[o];
    } else {
      dpre = dout;
    }
    if (!last) {
      for (std::size_t k = 0; k < dpre.size(); ++k) {
        if (!(lt.pre[k] > 0.0)) dpre[k] = 0.0;
      }
    }

    auto& gw = grads.weights[ii];
    auto& gb = grads.biases[ii];
    const auto& w = weights[ii];
    std::vector<double> dcols;
    if (ii > 0) dcols.assign(lt.cols.size(), 0.0);
    for (int co = 0; co < l.c_out; ++co) {
      double* gwr = gw.data() + static_cast<std::size_t>(co) * rows;
      const double* wr = w.data() + static_cast<std::size_t>(co) * rows;
      for (int p = 0; p < pos; ++p) {
        const double g = dpre[static_cast<std::size_t>(co) * pos + p];
        if (g == 0.0) continue;
        gb[co] += g;
        const double* cr = lt.cols.data() + static_cast<std::size_t>(p) * rows;
        for (int r = 0; r < rows; ++r) gwr[r] += g * cr[r];
        if (ii > 0) {
          double* dr = dcols.data() + static_cast<std::size_t>(p) * rows;
          for (int r = 0; r < rows; ++r) dr[r] += g * wr[r];
        }
      }
    }
    if (ii == 0) break;
    // The gather of this layer reads the previous layer's output directly.
    dout.assign(trace.layers[ii - 1].out.size(), 0.0);
    col2im_add(l, dcols, dout);
  }
}

double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument("cross_entropy: label out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  const double log_z = std::log(z) + m;
  if (!dlogits.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      dlogits[k] = std::exp(logits[k] - log_z) - (static_cast<int>(k) == label ? 1.0 : 0.0);
    }
  }
  return log_z - logits[label];
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace cimsec::netcore
