#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cimsec/netcore/compute.hpp"
#include "cimsec/netcore/dataset.hpp"
#include "cimsec/netcore/network.hpp"

namespace cimsec::netcore {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_test_accuracy;
  double test_accuracy = 0.0;
};

/// Momentum SGD over the training split, deterministic in `seed`.
/// Throws DivergenceError when the loss becomes non-finite.
TrainReport train_float(const NetworkSpec& net, FloatModel& model, const Dataset& data,
                        const Hyperparams& hyper, std::uint64_t seed);

/// One optimizer step from accumulated gradients (averaged over `count`),
/// rounding weights back to float32.
struct MomentumSgd {
  explicit MomentumSgd(const FloatModel& model);
  void step(FloatModel& model, const Gradients& grads, std::size_t count, const Hyperparams& h);

  Gradients velocity;
};

// Fraction of test images classified correctly by `predict`.
double evaluate(const Dataset& data, const std::function<int(std::span<const double>)>& predict,
                std::size_t limit = 0);

double accuracy_float(const NetworkSpec& net, const FloatModel& model, const Dataset& data,
                      std::size_t limit = 0);
double accuracy_quantized(const NetworkSpec& net, const QuantizedModel& model,
                          const Dataset& data, std::size_t limit = 0);

std::vector<double> to_double(std::span<const float> x);

}  // namespace cimsec::netcore
