#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cimsec::netcore {

enum class LayerKind { kConv, kFullyConnected };

/// One weight layer. Convolutions are stride 1 with "same" zero padding.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int c_in = 1;
  int c_out = 1;
  int k1 = 1;
  int k2 = 1;
  int h_in = 1;
  int w_in = 1;
  int weight_bits = 4;

  bool is_conv() const { return kind == LayerKind::kConv; }
  // Length of one flattened receptive field (rows of the weight matrix).
  int rows() const { return c_in * k1 * k2; }
  int positions() const { return h_in * w_in; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(rows()) * static_cast<std::size_t>(c_out);
  }
  void validate() const;
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  // 2x2 max pooling after layer i's activation.
  std::vector<bool> pool_after;
  std::string dataset = "synthetic";
  int classes = 10;

  std::size_t input_size() const;
  std::size_t output_size(std::size_t layer) const;  // after activation and pooling
  void validate() const;
};

struct Hyperparams {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 32;
  int epochs = 1;
  // Train against the quantized forward pass with straight-through gradients.
  bool quantization_aware = false;
};

/// Weights stored as [c_out][k1][k2][c_in]; values are always float32-representable.
struct FloatModel {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Hyperparams hyper;

  void validate(const NetworkSpec& net) const;
  bool finite() const;
};

/// Names of the built-in network shapes.
std::vector<std::string> network_presets();

/// Builds a preset for the given input geometry. Throws std::invalid_argument
/// for an unknown name.
NetworkSpec make_network(const std::string& preset, int channels, int height, int width,
                         int classes, int weight_bits);

// Deterministic He-uniform initialization, zero biases.
FloatModel init_model(const NetworkSpec& net, unsigned long long seed);

}  // namespace cimsec::netcore
