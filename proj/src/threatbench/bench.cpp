#include "cimsec/threatbench/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "cimsec/rng.hpp"

namespace cimsec::threatbench {

using netcore::FloatModel;
using netcore::NetworkSpec;

void ChipPopulation::validate() const {
  config.validate();
  if (seeds.empty() || victim >= seeds.size()) throw std::invalid_argument("ChipPopulation: victim out of range");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("ChipPopulation: chip seeds must be distinct");
  }
}

ChipPopulation ChipPopulation::make(std::uint64_t master_seed, std::size_t count, const adcvar::AdcConfig& config) {
  ChipPopulation p;
  p.config = config;
  for (std::size_t i = 0; i < count; ++i) p.seeds.push_back(derive_key({master_seed, 0xc41bULL, i}));
  p.validate();
  return p;
}

Summary summarize(std::vector<double> v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  const std::size_t mid = v.size() / 2;
  s.median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  return s;
}

namespace {

xbar::ProgrammedNetwork program(const NetworkSpec& net, const FloatModel& model, const HwSetup& setup,
                                std::span<const std::optional<shufflekey::ShuffleKey>> keys = {}) {
  return xbar::program_network(net, netcore::quantize_model(net, model), setup.program, keys);
}

}  // namespace

double baseline_accuracy(const NetworkSpec& net, const FloatModel& model, const netcore::Dataset& data,
                         const adcvar::AdcConfig& config, const HwSetup& setup) {
  const auto prog = program(net, model, setup);
  return xbar::accuracy_hw(prog, data, xbar::Chip::with_adc(config), nullptr, setup.eval_limit);
}

double chip_accuracy(const NetworkSpec& net, const FloatModel& model, const netcore::Dataset& data,
                     const adcvar::AdcConfig& config, std::uint64_t chip_seed, const HwSetup& setup) {
  const auto prog = program(net, model, setup);
  const auto fp = adcvar::gen_fingerprint(chip_seed, config, prog.total_tiles);
  return xbar::accuracy_hw(prog, data, xbar::Chip::with_adc(config, &fp), nullptr, setup.eval_limit);
}

RetrainResult retrain_on_chip(const NetworkSpec& net, const FloatModel& model, const netcore::Dataset& data,
                              const adcvar::AdcConfig& config, const adcvar::ChipFingerprint* fingerprint, int epochs,
                              const netcore::Hyperparams& hyper, std::uint64_t seed, const HwSetup& setup,
                              std::size_t train_limit) {
  if (epochs < 0 || epochs > 2) throw std::invalid_argument("retrain_on_chip: 0..2 epochs supported");
  RetrainResult res;
  res.model = model;
  auto& m = res.model;
  m.hyper = hyper;
  const xbar::Chip chip = xbar::Chip::with_adc(config, fingerprint);
  auto hw_accuracy = [&] {
    return xbar::accuracy_hw(program(net, m, setup), data, chip, nullptr, setup.eval_limit);
  };
  res.initial_accuracy = hw_accuracy();

  netcore::MomentumSgd opt(m);
  auto grads = netcore::Gradients::zeros_like(m);
  const std::size_t n = train_limit ? std::min(train_limit, data.train_count()) : data.train_count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  netcore::Trace trace;
  std::vector<double> dlogits(static_cast<std::size_t>(net.classes));
  // The step size anneals linearly to zero so the bound model does not end on a noisy step.
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  const double total_steps = static_cast<double>(epochs) * static_cast<double>((n + batch - 1) / batch);
  double step = 0.0;
  auto step_hyper = hyper;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    CounterRng rng{seed, 0x2e72ULL, static_cast<std::uint64_t>(epoch)};
    shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(hyper.batch_size));
      const auto qm = netcore::quantize_model(net, m);
      const auto prog = xbar::program_network(net, qm, setup.program);
      if (fingerprint != nullptr && fingerprint->tile_count() < prog.total_tiles) {
        throw std::invalid_argument("retrain_on_chip: fingerprint does not cover the network");
      }
      std::vector<std::vector<double>> effective;
      for (const auto& q : qm.weights) effective.push_back(q.dequantized());
      grads.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const auto x = netcore::to_double(data.train_image(idx));
        xbar::forward_hw(prog, x, chip, nullptr, &trace);
        const double loss = netcore::cross_entropy(trace.logits(), data.train_y[idx], dlogits);
        if (!std::isfinite(loss)) throw netcore::DivergenceError("retrain_on_chip: loss became non-finite");
        netcore::backward(net, effective, trace, dlogits, grads);
      }
      step_hyper.learning_rate = hyper.learning_rate * (1.0 - step / total_steps);
      step += 1.0;
      opt.step(m, grads, end - start, step_hyper);
      if (!m.finite()) throw netcore::DivergenceError("retrain_on_chip: weights became non-finite");
    }
    res.curve.push_back(hw_accuracy());
  }
  return res;
}

SweepResult clone_attack(const NetworkSpec& net, const FloatModel& bound_model, const netcore::Dataset& data,
                         const ChipPopulation& population, const HwSetup& setup) {
  population.validate();
  if (population.seeds.size() < 2) throw std::invalid_argument("clone_attack: population needs at least two chips");
  SweepResult r;
  r.axis = "chips";
  const auto prog = program(net, bound_model, setup);
  auto eval = [&](std::uint64_t seed) {
    const auto fp = adcvar::gen_fingerprint(seed, population.config, prog.total_tiles);
    return xbar::accuracy_hw(prog, data, xbar::Chip::with_adc(population.config, &fp), nullptr, setup.eval_limit);
  };
  r.points.push_back({"victim", 0.0, {eval(population.seeds[population.victim])}});
  SweepPoint clones{"clones", 1.0, {}};
  for (std::size_t i = 0; i < population.seeds.size(); ++i) {
    if (i != population.victim) clones.samples.push_back(eval(population.seeds[i]));
  }
  r.points.push_back(std::move(clones));
  return r;
}

std::vector<int> default_shuffle_layers(const NetworkSpec& net) {
  std::vector<int> out;
  bool first = true;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.layers[i].is_conv()) continue;
    if (first) {
      first = false;
      continue;
    }
    out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::optional<shufflekey::ShuffleKey>> make_keys(const NetworkSpec& net, const ShuffleSpec& spec) {
  std::vector<std::optional<shufflekey::ShuffleKey>> keys(net.layers.size());
  for (int li : spec.layers) {
    if (li < 0 || li >= static_cast<int>(net.layers.size())) throw std::invalid_argument("shuffle layer out of range");
    const auto& l = net.layers[li];
    std::vector<int> planes = spec.planes;
    if (planes.empty()) {
      for (int j = 0; j < l.weight_bits; ++j) planes.push_back(j);
    }
    keys[li] = shufflekey::gen_key(derive_key({spec.key_seed, static_cast<std::uint64_t>(li)}), li, l.c_in,
                                   spec.zeros, planes);
  }
  return keys;
}

namespace {

xbar::KeySet random_keys_like(const xbar::KeySet& real, std::uint64_t seed) {
  xbar::KeySet out(real.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (!real[i]) continue;
    const auto& r = *real[i];
    shufflekey::ShuffleKey k = r;
    for (std::size_t b = 0; b < r.blocks.size(); ++b) {
      k.blocks[b] = shufflekey::gen_block_key(derive_key({seed, i, b}), r.blocks[b].n, r.blocks[b].k);
    }
    out[i] = std::move(k);
  }
  return out;
}

}  // namespace

SweepResult random_key_attack(const NetworkSpec& net, const FloatModel& model, const netcore::Dataset& data,
                              const xbar::Chip& chip, const ShuffleSpec& shuffle, int trials, std::uint64_t seed,
                              const HwSetup& setup) {
  if (shuffle.layers.empty()) throw std::invalid_argument("random_key_attack: no shuffled layer");
  const auto keys = make_keys(net, shuffle);
  const auto prog = program(net, model, setup, keys);
  SweepResult r;
  r.axis = "random keys";
  r.points.push_back({"true key", 0.0, {xbar::accuracy_hw(prog, data, chip, &keys, setup.eval_limit)}});
  SweepPoint adv{"random key", 1.0, {}};
  for (int t = 0; t < trials; ++t) {
    const auto guess = random_keys_like(keys, derive_key({seed, 0x7a4dULL, static_cast<std::uint64_t>(t)}));
    adv.samples.push_back(xbar::accuracy_hw(prog, data, chip, &guess, setup.eval_limit));
  }
  r.points.push_back(std::move(adv));
  return r;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "layer_count") return SweepAxis::kLayerCount;
  if (name == "layer_location") return SweepAxis::kLayerLocation;
  if (name == "bit_planes") return SweepAxis::kBitPlanes;
  if (name == "matched_digits") return SweepAxis::kMatchedDigits;
  throw std::invalid_argument("invalid sweep axis '" + name +
                              "' (expected layer_count, layer_location, bit_planes or matched_digits)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kLayerCount: return "layer_count";
    case SweepAxis::kLayerLocation: return "layer_location";
    case SweepAxis::kBitPlanes: return "bit_planes";
    case SweepAxis::kMatchedDigits: return "matched_digits";
  }
  return "?";
}

SweepResult sweep_shuffle_config(const NetworkSpec& net, const FloatModel& model, const netcore::Dataset& data,
                                 const xbar::Chip& chip, SweepAxis axis, const ShuffleSpec& base, int trials,
                                 std::uint64_t seed, const HwSetup& setup, std::vector<int> points) {
  SweepResult r;
  r.axis = to_string(axis);
  const auto eligible = base.layers.empty() ? default_shuffle_layers(net) : base.layers;
  if (eligible.empty()) throw std::invalid_argument("sweep_shuffle_config: no shufflable layer");

  auto attack = [&](const ShuffleSpec& spec, std::uint64_t point_seed) {
    return random_key_attack(net, model, data, chip, spec, trials, point_seed, setup).points[1].samples;
  };

  switch (axis) {
    case SweepAxis::kLayerCount:
      // One seed for every count: each guess extends the previous count's guess by one layer.
      for (std::size_t count = 1; count <= eligible.size(); ++count) {
        ShuffleSpec s = base;
        s.layers.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count));
        r.points.push_back({std::to_string(count) + " layers", static_cast<double>(count),
                            attack(s, derive_key({seed, 1}))});
      }
      break;
    case SweepAxis::kLayerLocation:
      for (int li : eligible) {
        ShuffleSpec s = base;
        s.layers = {li};
        r.points.push_back({"layer " + std::to_string(li), static_cast<double>(li),
                            attack(s, derive_key({seed, static_cast<std::uint64_t>(li)}))});
      }
      break;
    case SweepAxis::kBitPlanes: {
      int bits = net.layers[eligible.front()].weight_bits;
      for (int li : eligible) bits = std::min(bits, net.layers[li].weight_bits);
      if (points.empty()) {
        for (int count = 1; count <= bits; ++count) points.push_back(count);
      }
      for (int count : points) {
        if (count < 1 || count > bits) throw std::invalid_argument("sweep_shuffle_config: bad plane count");
        ShuffleSpec s = base;
        s.layers = {eligible.front()};
        s.planes.clear();
        for (int j = 0; j < count; ++j) s.planes.push_back(bits - 1 - j);
        r.points.push_back({std::to_string(count) + " MSB planes", static_cast<double>(count),
                            attack(s, derive_key({seed, static_cast<std::uint64_t>(count)}))});
      }
      break;
    }
    case SweepAxis::kMatchedDigits: {
      ShuffleSpec s = base;
      s.layers = {eligible.front()};
      const auto keys = make_keys(net, s);
      const auto& real = *keys[s.layers.front()];
      const int N = real.channels();
      if (points.empty()) {
        for (int q = 0; q <= 8; ++q) points.push_back(N * q / 8);
      }
      const auto prog = program(net, model, setup, keys);
      for (int n : points) {
        SweepPoint pt{"n=" + std::to_string(n), static_cast<double>(n), {}};
        const int reps = n == N ? 1 : trials;
        for (int t = 0; t < reps; ++t) {
          auto guess = keys;
          guess[s.layers.front()] =
              shufflekey::key_with_matches(real, n, derive_key({seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(t)}));
          pt.samples.push_back(xbar::accuracy_hw(prog, data, chip, &guess, setup.eval_limit));
        }
        r.points.push_back(std::move(pt));
      }
      break;
    }
  }
  return r;
}

OffsetSensitivity offset_sensitivity(const netcore::Dataset& data,
                                     const std::vector<std::pair<NetworkSpec, FloatModel>>& models,
                                     const std::vector<OffsetCell>& cells, int chips, std::uint64_t seed,
                                     const HwSetup& setup, double level_spacing) {
  OffsetSensitivity out;
  out.result.axis = "adc_config";
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& cell = cells[ci];
    auto config = adcvar::make_adc_config(cell.kind, cell.wl_label);
    if (level_spacing > 0.0) config.level_spacing = level_spacing;
    SweepPoint pt{adcvar::to_string(cell.kind) + "/" + cell.wl_label + "/" + std::to_string(cell.weight_bits) + "b",
                  static_cast<double>(ci), {}};
    std::vector<double> drops;
    double base_sum = 0.0;
    int matched = 0;
    for (const auto& [net, model] : models) {
      if (net.layers.front().weight_bits != cell.weight_bits) continue;
      const double base = baseline_accuracy(net, model, data, config, setup);
      base_sum += base;
      ++matched;
      // The same chip seeds in every cell isolate the effect of the cell.
      for (int c = 0; c < chips; ++c) {
        const double acc =
            chip_accuracy(net, model, data, config, derive_key({seed, 0x0ff5ULL, static_cast<std::uint64_t>(c)}), setup);
        pt.samples.push_back(acc);
        drops.push_back(base - acc);
      }
    }
    if (matched == 0) {
      throw std::invalid_argument("offset_sensitivity: no model with " + std::to_string(cell.weight_bits) + "-bit weights");
    }
    out.baseline.push_back(base_sum / matched);
    out.drop.push_back(std::move(drops));
    out.result.points.push_back(std::move(pt));
  }
  return out;
}

}  // namespace cimsec::threatbench
