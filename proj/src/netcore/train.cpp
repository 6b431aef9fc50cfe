#include "cimsec/netcore/train.hpp"

#include <cmath>
#include <numeric>

#include "cimsec/rng.hpp"

namespace cimsec::netcore {

std::vector<double> to_double(std::span<const float> x) {
  return std::vector<double>(x.begin(), x.end());
}

MomentumSgd::MomentumSgd(const FloatModel& model) : velocity(Gradients::zeros_like(model)) {}

void MomentumSgd::step(FloatModel& model, const Gradients& grads, std::size_t count,
                       const Hyperparams& h) {
  const double inv = 1.0 / static_cast<double>(count);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& v,
                    double decay) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = h.momentum * v[k] + g[k] * inv + decay * p[k];
      p[k] = static_cast<float>(p[k] - h.learning_rate * v[k]);
    }
  };
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    update(model.weights[i], grads.weights[i], velocity.weights[i], h.weight_decay);
    update(model.biases[i], grads.biases[i], velocity.biases[i], 0.0);
  }
}

double evaluate(const Dataset& data, const std::function<int(std::span<const double>)>& predict,
                std::size_t limit) {
  const std::size_t n = limit ? std::min(limit, data.test_count()) : data.test_count();
  if (n == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = to_double(data.test_image(i));
    if (predict(x) == data.test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double accuracy_float(const NetworkSpec& net, const FloatModel& model, const Dataset& data,
                      std::size_t limit) {
  return evaluate(data, [&](std::span<const double> x) {
    return argmax(forward_float(net, model, x));
  }, limit);
}

double accuracy_quantized(const NetworkSpec& net, const QuantizedModel& model,
                          const Dataset& data, std::size_t limit) {
  return evaluate(data, [&](std::span<const double> x) {
    return argmax(forward_quantized(net, model, x));
  }, limit);
}

TrainReport train_float(const NetworkSpec& net, FloatModel& model, const Dataset& data,
                        const Hyperparams& hyper, std::uint64_t seed) {
  net.validate();
  model.validate(net);
  data.validate();
  if (data.train_count() == 0 || data.test_count() == 0) {
    throw std::invalid_argument("train_float: dataset needs both train and test splits");
  }
  if (data.image_size() != net.input_size()) {
    throw std::invalid_argument("train_float: dataset image size does not match network input");
  }
  model.hyper = hyper;
  TrainReport report;
  MomentumSgd opt(model);
  Gradients grads = Gradients::zeros_like(model);
  std::vector<std::size_t> order(data.train_count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Trace trace;
  std::vector<double> dlogits(static_cast<std::size_t>(net.classes));
  std::vector<std::vector<double>> effective;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    CounterRng rng{seed, 0xe90cULL, static_cast<std::uint64_t>(epoch)};
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hyper.batch_size));
      QuantizedModel qm;
      if (hyper.quantization_aware) {
        qm = quantize_model(net, model);
        effective.clear();
        for (const auto& q : qm.weights) effective.push_back(q.dequantized());
      }
      grads.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto x = to_double(data.train_image(idx));
        if (hyper.quantization_aware) {
          forward_quantized(net, qm, x, &trace);
        } else {
          forward_float(net, model, x, &trace);
        }
        const double loss = cross_entropy(trace.logits(), data.train_y[idx], dlogits);
        if (!std::isfinite(loss)) {
          throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
        }
        loss_sum += loss;
        backward(net, hyper.quantization_aware ? effective : model.weights, trace, dlogits, grads);
      }
      opt.step(model, grads, end - start, hyper);
      if (!model.finite()) throw DivergenceError("training diverged at epoch " + std::to_string(epoch));
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double acc = hyper.quantization_aware
                           ? accuracy_quantized(net, quantize_model(net, model), data)
                           : accuracy_float(net, model, data);
    report.epoch_test_accuracy.push_back(acc);
  }
  report.test_accuracy = report.epoch_test_accuracy.empty() ? 0.0 : report.epoch_test_accuracy.back();
  return report;
}

}  // namespace cimsec::netcore
