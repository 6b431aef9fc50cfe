#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cimsec::netcore {

/// Fixed-point tensor. Real value of element i is (codes[i] - zero_code) * scale.
/// Weights use a signed grid with zero_code = 2^(bits-1); activations are
/// unsigned with zero_code = 0.
struct QTensor {
  std::vector<int> shape;
  std::vector<std::uint16_t> codes;
  int bits = 8;
  double scale = 1.0;
  int zero_code = 0;

  std::size_t size() const { return codes.size(); }
  int signed_value(std::size_t i) const { return static_cast<int>(codes[i]) - zero_code; }
  double dequant(std::size_t i) const { return signed_value(i) * scale; }
  std::vector<double> dequantized() const;

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

// Step of the b-bit weight grid spanning [-max_abs, +max_abs].
double weight_step(double max_abs, int bits);

/// Signed b-bit quantization with step 2s/(2^b - 1), s = max |w|.
/// Zero maps exactly onto the zero-reference code 2^(b-1).
QTensor quantize_weights(std::span<const double> w, int bits, std::vector<int> shape = {});

// Same grid but with a caller-supplied step; used for requantization.
QTensor quantize_weights_with_step(std::span<const double> w, int bits, double step,
                                   std::vector<int> shape = {});

/// Unsigned 8-bit per-tensor max-scaled quantization of post-ReLU values.
QTensor quantize_activations(std::span<const double> a);

inline constexpr int kActivationBits = 8;

}  // namespace cimsec::netcore
