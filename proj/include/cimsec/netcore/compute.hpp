#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cimsec/netcore/network.hpp"
#include "cimsec/netcore/qtensor.hpp"

namespace cimsec::netcore {

/// Everything backward() needs from one layer of a forward pass.
struct LayerTrace {
  std::vector<double> cols;           // [positions][rows], the values the weights saw
  std::vector<double> pre;            // [c_out][positions] before activation
  std::vector<std::int32_t> pool_arg; // argmax index into the activated map
  std::vector<double> out;            // layer output after activation/pooling
};

struct Trace {
  std::vector<LayerTrace> layers;
  const std::vector<double>& logits() const { return layers.back().out; }
};

/// Per-layer quantized weights ([c_out][rows] codes) plus digital biases.
struct QuantizedModel {
  std::vector<QTensor> weights;
  std::vector<std::vector<double>> biases;
};

QuantizedModel quantize_model(const NetworkSpec& net, const FloatModel& model);

// Receptive-field gather, row index r = (ky * k2 + kx) * c_in + c.
void im2col(const LayerSpec& layer, std::span<const double> input, std::span<double> cols);
void col2im_add(const LayerSpec& layer, std::span<const double> dcols, std::span<double> dinput);

// Same gather on activation codes (zero padding maps to code 0).
void im2col_codes(const LayerSpec& layer, std::span<const std::uint16_t> input,
                  std::span<std::uint16_t> cols);

/// Real output of an integer accumulator. Every forward path that claims
/// bit-equality with another goes through this single expression.
inline double layer_output(std::int64_t acc, double unit, double w_step, double a_step,
                           double bias) {
  return static_cast<double>(acc) * unit * w_step * a_step + bias;
}

/// ReLU (except on the last layer) then optional 2x2 max pooling; fills
/// trace.out and trace.pool_arg from trace.pre.
void finish_layer(const NetworkSpec& net, std::size_t index, LayerTrace& trace);

/// Floating-point forward pass. Fills `trace` when non-null; returns logits.
std::vector<double> forward_float(const NetworkSpec& net, const FloatModel& model,
                                  std::span<const double> image, Trace* trace = nullptr);

/// Pure integer reference of quantized inference: 8-bit per-tensor activations,
/// b-bit weights, exact int64 accumulation.
std::vector<double> forward_quantized(const NetworkSpec& net, const QuantizedModel& model,
                                      std::span<const double> image, Trace* trace = nullptr);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static Gradients zeros_like(const FloatModel& model);
  void clear();
};

/// Accumulates parameter gradients for one sample into `grads`, given the
/// trace of a forward pass and the weights that pass effectively used.
void backward(const NetworkSpec& net, const std::vector<std::vector<double>>& weights,
              const Trace& trace, std::span<const double> dlogits, Gradients& grads);

// Softmax cross-entropy; writes d(loss)/d(logits) when `dlogits` is non-empty.
double cross_entropy(std::span<const double> logits, int label, std::span<double> dlogits = {});

int argmax(std::span<const double> v);

}  // namespace cimsec::netcore
