#include "cimsec/netcore/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cimsec/rng.hpp"

namespace cimsec::netcore {

void LayerSpec::validate() const {
  if (c_in < 1 || c_out < 1 || k1 < 1 || k2 < 1 || h_in < 1 || w_in < 1) {
    throw std::invalid_argument("LayerSpec: all dimensions must be >= 1");
  }
  if (kind == LayerKind::kFullyConnected && (k1 != 1 || k2 != 1 || h_in != 1 || w_in != 1)) {
    throw std::invalid_argument("LayerSpec: fully-connected layer requires k1=k2=h_in=w_in=1");
  }
  if (weight_bits < 2 || weight_bits > 8) {
    throw std::invalid_argument("LayerSpec: weight_bits must be in 2..8");
  }
}

std::size_t NetworkSpec::input_size() const {
  const auto& l = layers.front();
  return static_cast<std::size_t>(l.c_in) * l.h_in * l.w_in;
}

std::size_t NetworkSpec::output_size(std::size_t i) const {
  const auto& l = layers[i];
  const int div = pool_after[i] ? 2 : 1;
  return static_cast<std::size_t>(l.c_out) * (l.h_in / div) * (l.w_in / div);
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("NetworkSpec: no layers");
  if (pool_after.size() != layers.size()) {
    throw std::invalid_argument("NetworkSpec: pool_after must have one entry per layer");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    l.validate();
    if (pool_after[i] && (!l.is_conv() || l.h_in % 2 != 0 || l.w_in % 2 != 0)) {
      throw std::invalid_argument("NetworkSpec: layer " + std::to_string(i) +
                                  " cannot be pooled 2x2");
    }
    if (i + 1 == layers.size()) break;
    const auto& next = layers[i + 1];
    const int div = pool_after[i] ? 2 : 1;
    if (next.is_conv()) {
      if (!l.is_conv() || next.c_in != l.c_out || next.h_in != l.h_in / div ||
          next.w_in != l.w_in / div) {
        throw std::invalid_argument("NetworkSpec: layer " + std::to_string(i + 1) +
                                    " input shape does not match previous output");
      }
    } else if (static_cast<std::size_t>(next.c_in) != output_size(i)) {
      throw std::invalid_argument("NetworkSpec: layer " + std::to_string(i + 1) +
                                  " c_in does not match flattened previous output");
    }
  }
  if (layers.back().c_out != classes) {
    throw std::invalid_argument("NetworkSpec: last layer width must equal class count");
  }
}

void FloatModel::validate(const NetworkSpec& net) const {
  if (weights.size() != net.layers.size() || biases.size() != net.layers.size()) {
    throw std::invalid_argument("FloatModel: layer count mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].size() != net.layers[i].weight_count() ||
        biases[i].size() != static_cast<std::size_t>(net.layers[i].c_out)) {
      throw std::invalid_argument("FloatModel: shape mismatch at layer " + std::to_string(i));
    }
  }
}

bool FloatModel::finite() const {
  auto ok = [](const std::vector<std::vector<double>>& vs) {
    return std::all_of(vs.begin(), vs.end(), [](const auto& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    });
  };
  return ok(weights) && ok(biases);
}

namespace {

struct Builder {
  NetworkSpec net;
  int c, h, w, bits;

  void conv(int out, bool pool) {
    net.layers.push_back({LayerKind::kConv, c, out, 3, 3, h, w, bits});
    net.pool_after.push_back(pool);
    c = out;
    if (pool) {
      h /= 2;
      w /= 2;
    }
  }
  void fc(int out) {
    net.layers.push_back({LayerKind::kFullyConnected, c * h * w, out, 1, 1, 1, 1, bits});
    net.pool_after.push_back(false);
    c = out;
    h = w = 1;
  }
};

}  // namespace

std::vector<std::string> network_presets() {
  return {"mlp", "cnn_desk", "vgg8_desk"};
}

NetworkSpec make_network(const std::string& preset, int channels, int height, int width,
                         int classes, int weight_bits) {
  Builder b{{}, channels, height, width, weight_bits};
  b.net.name = preset;
  b.net.classes = classes;
  if (preset == "mlp") {
    b.fc(64);
    b.fc(classes);
  } else if (preset == "cnn_desk") {
    b.conv(16, false);
    b.conv(32, true);
    b.conv(32, true);
    b.fc(classes);
  } else if (preset == "vgg8_desk") {
    // VGG-8 shape: six 3x3 convolutions in three pooled stages, two FC layers.
    b.conv(32, false);
    b.conv(32, true);
    b.conv(64, false);
    b.conv(64, true);
    b.conv(128, false);
    b.conv(128, true);
    b.fc(256);
    b.fc(classes);
  } else {
    throw std::invalid_argument("unknown network preset '" + preset + "'");
  }
  b.net.validate();
  return std::move(b.net);
}

FloatModel init_model(const NetworkSpec& net, unsigned long long seed) {
  net.validate();
  FloatModel m;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    CounterRng rng{seed, 0x1417ULL, i};
    const double bound = std::sqrt(6.0 / l.rows());
    std::vector<double> w(l.weight_count());
    for (auto& v : w) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    m.weights.push_back(std::move(w));
    m.biases.emplace_back(static_cast<std::size_t>(l.c_out), 0.0);
  }
  return m;
}

}  // namespace cimsec::netcore
