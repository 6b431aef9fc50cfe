#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/expcli/experiment.hpp"
#include "cimsec/hwcost/cost.hpp"
#include "cimsec/netcore/model_io.hpp"
#include "cimsec/rng.hpp"
#include "cimsec/shufflekey/bounds.hpp"
#include "cimsec/threatbench/bench.hpp"

namespace cimsec::expcli {

using json = nlohmann::ordered_json;
using netcore::FloatModel;
using netcore::NetworkSpec;

namespace {

// Sub-seed streams fanned out from the master seed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kTrainStream,
  kChipStream,
  kRetrainStream,
  kKeyStream,
  kAttackStream,
  kMonteCarloStream,
  kFakeRowStream,
  kControlStream,
};

std::uint64_t sub_seed(const ExperimentConfig& c, Stream s, std::uint64_t index = 0) {
  return derive_key({c.master_seed, static_cast<std::uint64_t>(s), index});
}

class Runner {
 public:
  Runner(const ExperimentConfig& c, std::ostream* log) : c_(c), log_(log) {
    setup_.eval_limit = c.eval_limit;
    setup_.program.conv_mode = c.mapping == "conventional" ? xbar::MappingMode::kConventional
                                                           : xbar::MappingMode::kSubkernel;
    setup_.program.fake_seed = sub_seed(c, kFakeRowStream);
  }

  RunResult run() {
    switch (c_.kind) {
      case ExperimentKind::kBaseline: baseline(); break;
      case ExperimentKind::kOffsetSensitivity: offset(); break;
      case ExperimentKind::kRetrain: retrain(); break;
      case ExperimentKind::kCloneAttack: clone(); break;
      case ExperimentKind::kKeyAttack: key_attack(); break;
      case ExperimentKind::kSweep: sweep(); break;
      case ExperimentKind::kBounds: bounds(); break;
      case ExperimentKind::kCost: cost(); break;
    }
    return std::move(out_);
  }

 private:
  template <typename... Args>
  void say(const char* fmt, Args... args) {
    if (log_ == nullptr) return;
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    *log_ << buf << '\n' << std::flush;
  }

  void row(const std::string& axis, double point, const std::string& label, const std::string& metric, int sample,
           std::uint64_t seed, double value) {
    if (!std::isfinite(value)) {
      throw std::runtime_error("non-finite metric " + metric + " at " + axis + "=" + label);
    }
    out_.rows.push_back({axis, point, label, metric, sample, seed, value});
  }

  void check(const std::string& name, double value, const std::string& op, double threshold, double hi = 0.0) {
    bool pass = false;
    if (op == "<=") pass = value <= threshold;
    if (op == ">=") pass = value >= threshold;
    if (op == "==") pass = value == threshold;
    if (op == "<") pass = value < threshold;
    if (op == "in") pass = value >= threshold && value <= hi;
    out_.checks.push_back({name, value, op, threshold, hi, pass});
    say("  check %-44s %s", name.c_str(), pass ? "pass" : "FAIL");
  }

  const netcore::Dataset& data() {
    if (!data_) {
      const auto path = resolve_dataset_path(c_.dataset);
      say("dataset %s %s", c_.dataset.id.c_str(), path.string().c_str());
      data_ = netcore::load_dataset(c_.dataset.id, path, c_.dataset.synthetic);
      data_->validate();
    }
    return *data_;
  }

  // Geometry without touching the data files.
  std::tuple<int, int, int, int> geometry() const {
    if (c_.dataset.id == "cifar10") return {3, 32, 32, 10};
    if (c_.dataset.id == "mnist") return {1, 28, 28, 10};
    const auto& s = c_.dataset.synthetic;
    return {s.channels, s.height, s.width, s.classes};
  }

  NetworkSpec network(int bits) const {
    const auto [ch, h, w, classes] = geometry();
    auto net = netcore::make_network(c_.network, ch, h, w, classes, bits);
    net.dataset = c_.dataset.id;
    return net;
  }

  netcore::Hyperparams hyper(double lr) const {
    netcore::Hyperparams h;
    h.learning_rate = lr;
    h.momentum = c_.train.momentum;
    h.weight_decay = c_.train.weight_decay;
    h.batch_size = c_.train.batch_size;
    h.epochs = c_.train.epochs;
    h.quantization_aware = c_.train.quantization_aware;
    return h;
  }

  // Replica r > 0 draws fresh init and training streams.
  std::pair<NetworkSpec, FloatModel> model(int bits, int replica = 0) {
    if (!c_.model_path.empty()) {
      auto loaded = netcore::load_model(c_.model_path);
      if (loaded.net.layers.front().weight_bits != bits) {
        throw std::runtime_error("model " + c_.model_path + " has " +
                                 std::to_string(loaded.net.layers.front().weight_bits) + "-bit weights, experiment needs " +
                                 std::to_string(bits));
      }
      if (loaded.net.input_size() != data().image_size()) {
        throw std::runtime_error("model " + c_.model_path + " does not match the dataset geometry");
      }
      return {loaded.net, loaded.model};
    }
    auto net = network(bits);
    const auto index = static_cast<std::uint64_t>(bits) | (static_cast<std::uint64_t>(replica) << 8);
    auto m = netcore::init_model(net, sub_seed(c_, kInitStream, index));
    const auto report =
        netcore::train_float(net, m, data(), hyper(c_.train.learning_rate), sub_seed(c_, kTrainStream, index));
    say("trained %s %d-bit: test accuracy %.4f", c_.network.c_str(), bits, report.test_accuracy);
    return {net, m};
  }

  adcvar::AdcConfig adc(const std::string& kind, const std::string& wl) const {
    // A curve file replaces the configured preset only.
    const bool from_file = !c_.adc.pass_rate_file.empty() && wl == c_.adc.wl;
    auto cfg = adcvar::make_adc_config(adcvar::parse_adc_kind(kind), from_file ? "ideal" : wl, c_.adc.bits);
    if (from_file) {
      cfg.pass_rate = adcvar::load_pass_rate_curve(c_.adc.pass_rate_file);
      cfg.wl_label = c_.adc.pass_rate_file;
    }
    cfg.level_spacing = c_.adc.level_spacing;
    cfg.validate();
    return cfg;
  }

  double quantized_accuracy(const NetworkSpec& net, const FloatModel& m) {
    return netcore::accuracy_quantized(net, netcore::quantize_model(net, m), data(), c_.eval_limit);
  }

  void record_samples(const std::string& axis, const threatbench::SweepPoint& p, const std::string& metric,
                      const std::vector<std::uint64_t>& seeds) {
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
      row(axis, p.axis_value, p.label, metric, static_cast<int>(i), i < seeds.size() ? seeds[i] : 0, p.samples[i]);
    }
  }

  void summary_metric(const std::string& name, const std::vector<double>& samples) {
    const auto s = threatbench::summarize(samples);
    out_.metrics[name] = {{"min", s.min}, {"median", s.median}, {"max", s.max}, {"count", s.count}};
  }

  void baseline() {
    auto [net, m] = model(c_.weight_bits);
    const auto qm = netcore::quantize_model(net, m);
    const auto prog = xbar::program_network(net, qm, setup_.program);
    const double fl = netcore::accuracy_float(net, m, data(), c_.eval_limit);
    const double q = netcore::accuracy_quantized(net, qm, data(), c_.eval_limit);
    const double hw = xbar::accuracy_hw(prog, data(), xbar::Chip::ideal(), nullptr, c_.eval_limit);
    const auto cfg = adc(c_.adc.kind, "ideal");
    const double zero = xbar::accuracy_hw(prog, data(), xbar::Chip::with_adc(cfg), nullptr, c_.eval_limit);
    row("model", 0, "float", "accuracy", 0, 0, fl);
    row("model", 1, "quantized", "accuracy", 0, 0, q);
    row("model", 2, "hw_ideal", "accuracy", 0, 0, hw);
    row("model", 3, "hw_zero_offset_adc", "accuracy", 0, 0, zero);
    out_.metrics["float"] = fl;
    out_.metrics["quantized"] = q;
    out_.metrics["hw_ideal"] = hw;
    out_.metrics["hw_zero_offset_adc"] = zero;
    out_.metrics["tiles"] = prog.total_tiles;
    check("hw_ideal_minus_quantized", hw - q, "==", 0.0);
    check("quantized_accuracy", q, ">=", 0.70);
  }

  void offset() {
    std::vector<std::pair<NetworkSpec, FloatModel>> models;
    for (int b : c_.offset.weight_bits) {
      for (int r = 0; r < c_.offset.models; ++r) models.push_back(model(b, r));
    }
    std::vector<threatbench::OffsetCell> cells;
    for (int b : c_.offset.weight_bits) {
      for (const auto& k : c_.offset.kinds) {
        for (const auto& wl : c_.offset.wl) cells.push_back({adcvar::parse_adc_kind(k), wl, b});
      }
    }
    const std::uint64_t seed = sub_seed(c_, kChipStream);
    const auto r = threatbench::offset_sensitivity(data(), models, cells, c_.offset.chips, seed, setup_,
                                                   c_.adc.level_spacing);
    std::vector<std::uint64_t> chip_seeds;
    for (int r = 0; r < c_.offset.models; ++r) {
      for (int i = 0; i < c_.offset.chips; ++i) chip_seeds.push_back(derive_key({seed, 0x0ff5ULL, static_cast<std::uint64_t>(i)}));
    }
    std::map<std::tuple<int, std::string, std::string>, double> drop;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& p = r.result.points[i];
      record_samples("adc_config", p, "accuracy", chip_seeds);
      row("adc_config", p.axis_value, p.label, "baseline", 0, 0, r.baseline[i]);
      for (std::size_t j = 0; j < r.drop[i].size(); ++j) {
        row("adc_config", p.axis_value, p.label, "drop", static_cast<int>(j), chip_seeds[j], r.drop[i][j]);
      }
      const double d = threatbench::summarize(r.drop[i]).median;
      row("adc_config", p.axis_value, p.label, "median_drop", 0, 0, d);
      drop[{cells[i].weight_bits, adcvar::to_string(cells[i].kind), cells[i].wl_label}] = d;
      out_.metrics["median_drop"][p.label] = d;
      say("  %-16s baseline %.4f median drop %.4f", p.label.c_str(), r.baseline[i], d);
    }
    const bool both = std::count(c_.offset.kinds.begin(), c_.offset.kinds.end(), "sar") &&
                      std::count(c_.offset.kinds.begin(), c_.offset.kinds.end(), "flash");
    for (int b : c_.offset.weight_bits) {
      for (const auto& wl : c_.offset.wl) {
        if (both) {
          check("drop_sar_minus_flash_" + wl + "_" + std::to_string(b) + "b",
                drop[{b, "sar", wl}] - drop[{b, "flash", wl}], ">=", 0.0);
        }
      }
      for (const auto& k : c_.offset.kinds) {
        for (std::size_t w = 1; w < c_.offset.wl.size(); ++w) {
          check("drop_" + c_.offset.wl[w] + "_minus_" + c_.offset.wl[w - 1] + "_" + k + "_" + std::to_string(b) + "b",
                drop[{b, k, c_.offset.wl[w]}] - drop[{b, k, c_.offset.wl[w - 1]}], ">=", 0.0);
        }
      }
    }
    auto bits = c_.offset.weight_bits;
    std::sort(bits.begin(), bits.end());
    for (const auto& k : c_.offset.kinds) {
      for (const auto& wl : c_.offset.wl) {
        for (std::size_t i = 1; i < bits.size(); ++i) {
          check("drop_" + std::to_string(bits[i - 1]) + "b_minus_" + std::to_string(bits[i]) + "b_" + k + "_" + wl,
                drop[{bits[i - 1], k, wl}] - drop[{bits[i], k, wl}], ">=", 0.0);
        }
      }
    }
  }

  // Retrains on the victim chip `repeats` times; returns the bound models.
  std::vector<FloatModel> retrain_victim(const NetworkSpec& net, const FloatModel& m, const adcvar::AdcConfig& cfg,
                                         std::uint64_t victim_seed, double baseline) {
    const auto prog = xbar::program_network(net, netcore::quantize_model(net, m), setup_.program);
    const auto fp = adcvar::gen_fingerprint(victim_seed, cfg, prog.total_tiles);
    std::vector<FloatModel> bound;
    std::vector<double> finals;
    for (int rep = 0; rep < c_.retrain.repeats; ++rep) {
      const std::uint64_t seed = sub_seed(c_, kRetrainStream, static_cast<std::uint64_t>(rep));
      auto res = threatbench::retrain_on_chip(net, m, data(), cfg, &fp, c_.retrain.epochs,
                                              hyper(c_.retrain.learning_rate), seed, setup_, c_.retrain.train_limit);
      row("epoch", 0, "victim", "hw_accuracy", rep, seed, res.initial_accuracy);
      for (std::size_t e = 0; e < res.curve.size(); ++e) {
        row("epoch", static_cast<double>(e + 1), "victim", "hw_accuracy", rep, seed, res.curve[e]);
      }
      const double fin = res.curve.empty() ? res.initial_accuracy : res.curve.back();
      say("  retrain %d: %.4f -> %.4f (baseline %.4f)", rep, res.initial_accuracy, fin, baseline);
      finals.push_back(fin);
      bound.push_back(std::move(res.model));
    }
    summary_metric("victim_after_retrain", finals);
    for (std::size_t i = 0; i < finals.size(); ++i) {
      check("baseline_minus_victim_repeat" + std::to_string(i), baseline - finals[i], "<=", 0.015);
    }
    if (finals.size() > 1) {
      const auto [lo, hi] = std::minmax_element(finals.begin(), finals.end());
      check("victim_spread_over_repeats", *hi - *lo, "<", 0.02);
    }
    return bound;
  }

  void retrain() {
    auto [net, m] = model(c_.weight_bits);
    const double q = quantized_accuracy(net, m);
    row("model", 0, "quantized_baseline", "accuracy", 0, 0, q);
    out_.metrics["quantized_baseline"] = q;
    const auto cfg = adc(c_.adc.kind, c_.adc.wl);
    const auto pop = threatbench::ChipPopulation::make(sub_seed(c_, kChipStream), 1, cfg);
    retrain_victim(net, m, cfg, pop.seeds[0], q);
    if (c_.retrain.control) {
      const auto ideal = adc(c_.adc.kind, "ideal");
      const std::uint64_t seed = sub_seed(c_, kControlStream);
      const auto res = threatbench::retrain_on_chip(net, m, data(), ideal, nullptr, c_.retrain.epochs,
                                                    hyper(c_.retrain.learning_rate), seed, setup_, c_.retrain.train_limit);
      row("epoch", 0, "zero_offset_control", "hw_accuracy", 0, seed, res.initial_accuracy);
      for (std::size_t e = 0; e < res.curve.size(); ++e) {
        row("epoch", static_cast<double>(e + 1), "zero_offset_control", "hw_accuracy", 0, seed, res.curve[e]);
      }
      const double fin = res.curve.empty() ? res.initial_accuracy : res.curve.back();
      // Retraining without offsets must not cost accuracy either.
      check("zero_offset_control_drop", q - fin, "<=", 0.015);
    }
  }

  void clone() {
    auto [net, m] = model(c_.weight_bits);
    const double q = quantized_accuracy(net, m);
    row("model", 0, "quantized_baseline", "accuracy", 0, 0, q);
    out_.metrics["quantized_baseline"] = q;
    const auto cfg = adc(c_.adc.kind, c_.adc.wl);
    auto pop = threatbench::ChipPopulation::make(sub_seed(c_, kChipStream), static_cast<std::size_t>(c_.population), cfg);
    const auto bound = retrain_victim(net, m, cfg, pop.seeds[pop.victim], q);
    const auto r = threatbench::clone_attack(net, bound.front(), data(), pop, setup_);
    std::vector<std::uint64_t> clone_seeds;
    for (std::size_t i = 0; i < pop.seeds.size(); ++i) {
      if (i != pop.victim) clone_seeds.push_back(pop.seeds[i]);
    }
    record_samples("chips", r.points[0], "accuracy", {pop.seeds[pop.victim]});
    record_samples("chips", r.points[1], "accuracy", clone_seeds);
    const double victim = r.points[0].samples[0];
    const auto s = threatbench::summarize(r.points[1].samples);
    out_.metrics["victim"] = victim;
    summary_metric("clones", r.points[1].samples);
    say("  victim %.4f clones min %.4f median %.4f max %.4f", victim, s.min, s.median, s.max);
    check("clone_count", static_cast<double>(s.count), ">=", 20);
    check("victim_minus_clone_median", victim - s.median, ">=", 0.10);
    if (c_.retrain.control) {
      // Offset-free chips are interchangeable: no clone may lose accuracy.
      const auto ideal = adc(c_.adc.kind, "ideal");
      auto control = threatbench::ChipPopulation::make(sub_seed(c_, kControlStream), 4, ideal);
      const auto cr = threatbench::clone_attack(net, bound.front(), data(), control, setup_);
      record_samples("chips", {"control_victim", 2, cr.points[0].samples}, "accuracy", {control.seeds[0]});
      record_samples("chips", {"control_clone", 3, cr.points[1].samples}, "accuracy",
                     {control.seeds.begin() + 1, control.seeds.end()});
      double worst = 0.0;
      for (double a : cr.points[1].samples) worst = std::max(worst, std::abs(a - cr.points[0].samples[0]));
      check("zero_offset_control_max_drop", worst, "==", 0.0);
    }
  }

  threatbench::ShuffleSpec shuffle_spec(const NetworkSpec& net, bool all_eligible) {
    threatbench::ShuffleSpec s;
    const auto eligible = threatbench::default_shuffle_layers(net);
    s.layers = c_.keys.layers;
    if (s.layers.empty()) {
      if (eligible.empty()) throw ConfigError("keys.layers: network '" + c_.network + "' has no shufflable conv layer");
      s.layers = all_eligible ? eligible : std::vector<int>{eligible.front()};
    }
    for (int li : s.layers) {
      if (li < 0 || li >= static_cast<int>(net.layers.size()) || !net.layers[li].is_conv()) {
        throw ConfigError("keys.layers: layer " + std::to_string(li) + " is not a conv layer of '" + c_.network + "'");
      }
    }
    s.zeros = c_.keys.zeros;
    s.planes = c_.keys.planes;
    s.key_seed = sub_seed(c_, kKeyStream);
    return s;
  }

  void key_attack() {
    auto [net, m] = model(c_.weight_bits);
    const auto spec = shuffle_spec(net, false);
    const auto prog = xbar::program_network(net, netcore::quantize_model(net, m), setup_.program);
    const double base = xbar::accuracy_hw(prog, data(), xbar::Chip::ideal(), nullptr, c_.eval_limit);
    row("model", 0, "unshuffled_baseline", "accuracy", 0, 0, base);
    const std::uint64_t seed = sub_seed(c_, kAttackStream);
    const auto r = threatbench::random_key_attack(net, m, data(), xbar::Chip::ideal(), spec, c_.keys.trials, seed, setup_);
    record_samples("random_keys", r.points[0], "accuracy", {spec.key_seed});
    std::vector<std::uint64_t> seeds;
    for (int t = 0; t < c_.keys.trials; ++t) seeds.push_back(derive_key({seed, 0x7a4dULL, static_cast<std::uint64_t>(t)}));
    record_samples("random_keys", r.points[1], "accuracy", seeds);
    for (const auto& k : threatbench::make_keys(net, spec)) {
      if (k) out_.keys.push_back(*k);
    }
    const auto s = threatbench::summarize(r.points[1].samples);
    out_.metrics["baseline"] = base;
    out_.metrics["true_key"] = r.points[0].samples[0];
    summary_metric("random_key", r.points[1].samples);
    say("  baseline %.4f true key %.4f random median %.4f", base, r.points[0].samples[0], s.median);
    check("true_key_minus_baseline", r.points[0].samples[0] - base, "==", 0.0);
    check("random_key_median", s.median, "<=", 0.25);
  }

  void sweep() {
    auto [net, m] = model(c_.weight_bits);
    const auto axis = threatbench::parse_sweep_axis(c_.sweep.axis);
    const auto spec = shuffle_spec(net, true);
    const auto prog = xbar::program_network(net, netcore::quantize_model(net, m), setup_.program);
    const double base = xbar::accuracy_hw(prog, data(), xbar::Chip::ideal(), nullptr, c_.eval_limit);
    row("model", 0, "unshuffled_baseline", "accuracy", 0, 0, base);
    out_.metrics["baseline"] = base;
    const std::uint64_t seed = sub_seed(c_, kAttackStream);
    const auto r = threatbench::sweep_shuffle_config(net, m, data(), xbar::Chip::ideal(), axis, spec, c_.keys.trials,
                                                     seed, setup_, c_.sweep.points);
    std::vector<double> medians;
    for (const auto& p : r.points) {
      record_samples(r.axis, p, "accuracy", {});
      medians.push_back(threatbench::summarize(p.samples).median);
      out_.metrics["median"][p.label] = medians.back();
      say("  %-18s median %.4f", p.label.c_str(), medians.back());
    }
    switch (axis) {
      case threatbench::SweepAxis::kLayerCount:
        for (std::size_t i = 1; i < medians.size(); ++i) {
          check("median_" + r.points[i].label + "_minus_" + r.points[i - 1].label, medians[i] - medians[i - 1], "<=", 0.0);
        }
        break;
      case threatbench::SweepAxis::kLayerLocation:
        for (std::size_t i = 0; i < medians.size(); ++i) check("median_" + r.points[i].label, medians[i], "<=", 0.25);
        break;
      case threatbench::SweepAxis::kBitPlanes:
        for (std::size_t i = 0; i < r.points.size(); ++i) {
          if (r.points[i].axis_value == 2) check("median_2_msb_planes", medians[i], "<", 0.30);
        }
        break;
      case threatbench::SweepAxis::kMatchedDigits: {
        const auto& last = r.points.back();
        const int N = threatbench::make_keys(net, {{spec.layers.front()}, spec.zeros, spec.planes, spec.key_seed})
                          [spec.layers.front()]->channels();
        if (static_cast<int>(last.axis_value) == N) check("full_match_minus_baseline", last.samples.front() - base, "==", 0.0);
        check("median_full_minus_first", medians.back() - medians.front(), ">=", 0.0);
        break;
      }
    }
  }

  void bounds() {
    const auto& b = c_.bounds;
    const auto exact = shufflekey::exact_match_distribution(b.N);
    const std::uint64_t s0 = sub_seed(c_, kMonteCarloStream, 0);
    const std::uint64_t s1 = sub_seed(c_, kMonteCarloStream, 1);
    const auto mc = shufflekey::monte_carlo_match(b.N, 0, b.trials, s0);
    const auto mck = shufflekey::monte_carlo_match(b.N, b.k, b.trials, s1);
    double worst_rel = 0.0;
    double worst_excess = -1.0;
    double worst_excess_insert = -1.0;
    double worst_insert_vs_plain = -1.0;
    double inv_factorial = 1.0;
    const double T = static_cast<double>(b.trials);
    auto sigma = [&](double p) { return std::sqrt(std::clamp(p, 0.0, 1.0) * (1.0 - std::clamp(p, 0.0, 1.0)) / T); };
    for (int n = 0; n <= b.max_n; ++n) {
      if (n > 0) inv_factorial /= n;
      const double eq1 = shufflekey::bound_no_insert(b.N, n);
      const double eq2 = shufflekey::bound_with_insert(b.N, b.N + b.k, b.k, n);
      const auto p = static_cast<double>(n);
      row("n", p, "", "eq1_bound", 0, 0, eq1);
      row("n", p, "", "eq2_bound", 0, 0, eq2);
      row("n", p, "", "exact_prob", 0, 0, exact[n]);
      row("n", p, "", "mc_freq", 0, s0, mc.frequency(n));
      row("n", p, "", "mc_freq_at_least", 0, s0, mc.frequency_at_least(n));
      row("n", p, "", "mc_freq_insert", 0, s1, mck.frequency(n));
      row("n", p, "", "mc_freq_insert_at_least", 0, s1, mck.frequency_at_least(n));
      worst_rel = std::max(worst_rel, std::abs(eq1 - inv_factorial) / inv_factorial);
      const double b1 = std::min(eq1, 1.0);
      worst_excess = std::max(worst_excess, (mc.frequency_at_least(n) - b1) / std::max(sigma(b1), 1.0 / T));
      worst_excess_insert =
          std::max(worst_excess_insert, (mck.frequency_at_least(n) - eq2) / std::max(sigma(eq2), 1.0 / T));
      if (n >= 1) worst_insert_vs_plain = std::max(worst_insert_vs_plain, mck.frequency(n) - mc.frequency(n));
    }
    out_.metrics["mc_freq_at_least_2"] = mc.frequency_at_least(2);
    out_.metrics["exact_at_least_2"] = 1.0 - exact[0] - exact[1];
    check("eq1_max_rel_error_vs_inverse_factorial", worst_rel, "<=", 1e-12);
    if (b.N >= 20) check("mc_freq_at_least_2", mc.frequency_at_least(2), "in", 0.264 - 0.01, 0.264 + 0.01);
    check("mc_over_eq1_bound_in_sigma", worst_excess, "<=", 3.0);
    check("mc_insert_over_eq2_bound_in_sigma", worst_excess_insert, "<=", 3.0);
    if (b.k > 0) check("mc_insert_minus_plain_max_n_ge_1", worst_insert_vs_plain, "<=", 0.0);
  }

  void cost() {
    auto model = c_.cost.table.empty() ? hwcost::default_cost_model() : hwcost::load_cost_table(c_.cost.table);
    model.sharing = c_.cost.sharing;
    model.validate();
    int idx = 0;
    for (const auto& rec : model.records) {
      row("component", idx, rec.name, "area", 0, 0, rec.area);
      if (rec.latency) row("component", idx, rec.name, "latency_ns", 0, 0, *rec.latency);
      if (rec.energy) row("component", idx, rec.name, "energy_pj", 0, 0, *rec.energy);
      ++idx;
    }
    for (const char* prefix : {"rram", "sram"}) {
      const auto s = model.component_sum(prefix);
      row("component", idx, s.name, "area", 0, 0, s.area);
      row("component", idx, s.name, "latency_ns", 0, 0, *s.latency);
      row("component", idx, s.name, "energy_pj", 0, 0, *s.energy);
      ++idx;
      out_.metrics[s.name] = {{"area", s.area}, {"latency_ns", *s.latency}, {"energy_pj", *s.energy}};
    }
    const auto rram = model.component_sum("rram");
    const auto sram = model.component_sum("sram");
    check("sram_area_sum_minus_total", std::abs(sram.area - model.lookup("sram.total").area), "<=", 1e-3);
    check("rram_latency_sum_minus_total", std::abs(*rram.latency - *model.lookup("rram.total").latency), "<=", 0.01);
    check("rram_energy_sum_minus_total", std::abs(*rram.energy - *model.lookup("rram.total").energy), "<=", 0.01);

    const auto net0 = network(c_.cost.weight_bits.front());
    const auto eligible = threatbench::default_shuffle_layers(net0);
    std::vector<int> all(net0.layers.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    for (int bits : c_.cost.weight_bits) {
      const auto net = network(bits);
      const std::string tag = std::to_string(bits) + "b";
      const auto tc = hwcost::tile_count(net, bits);
      for (std::size_t li = 0; li < tc.per_layer.size(); ++li) {
        row("layer", static_cast<double>(li), tag, "tiles", 0, 0, static_cast<double>(tc.per_layer[li]));
      }
      auto put = [&](const std::string& axis, double point, const hwcost::ShuffleOverhead& o) {
        row(axis, point, tag, "area_pct", 0, 0, o.area_pct);
        row(axis, point, tag, "area_pct_component_basis", 0, 0, o.area_pct_component_basis);
        row(axis, point, tag, "energy_pct", 0, 0, o.energy_pct);
        row(axis, point, tag, "latency_pct", 0, 0, o.latency_pct);
      };
      std::vector<double> loc_area;
      for (int li : eligible) {
        const auto o = hwcost::shuffle_overhead(net, bits, {li}, bits, model);
        put("shuffle_location", li, o);
        loc_area.push_back(o.area_pct);
      }
      const auto full = hwcost::shuffle_overhead(net, bits, all, bits, model);
      put("all_layers", 0, full);
      out_.metrics["all_layers_area_pct"][tag] = full.area_pct;
      out_.metrics["all_layers_energy_pct"][tag] = full.energy_pct;
      std::vector<double> xs, ys;
      for (int planes = 1; planes <= bits; ++planes) {
        const auto o = hwcost::shuffle_overhead(net, bits, all, planes, model);
        put("bit_planes", planes, o);
        xs.push_back(planes);
        ys.push_back(o.energy_pct);
      }
      if (bits == 2) check("all_layer_area_pct_2b", full.area_pct, "in", 30.0, 70.0);
      if (bits == 8) check("energy_vs_planes_r2_8b", r_squared(xs, ys), ">=", 0.99);
      if (loc_area.size() >= 2) check("shallow_minus_deep_area_pct_" + tag, loc_area.front() - loc_area.back(), "<", 0.0);
    }
  }

  static double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i] / n;
      my += y[i] / n;
    }
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    if (syy == 0.0) return 1.0;
    return sxy * sxy / (sxx * syy);
  }

  const ExperimentConfig& c_;
  std::ostream* log_;
  threatbench::HwSetup setup_;
  std::optional<netcore::Dataset> data_;
  RunResult out_;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

bool RunResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

RunResult run_experiment(const ExperimentConfig& config, std::ostream* log) {
  if (log != nullptr) *log << "run " << to_string(config.kind) << " '" << config.id << "' seed " << config.master_seed << "\n";
  auto result = Runner(config, log).run();
  // Canonical order: axis, point, label, metric, sample.
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.axis, a.point, a.label, a.metric, a.sample) < std::tie(b.axis, b.point, b.label, b.metric, b.sample);
  });
  return result;
}

std::string csv_text(const ExperimentConfig& config, const RunResult& result) {
  const std::string hash = config_hash(config);
  const std::string seed = std::to_string(config.master_seed);
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : result.rows) {
    out += config.id + ',' + hash + ',' + seed + ',' + r.axis + ',' + fmt(r.point) + ',' + r.label + ',' + r.metric +
           ',' + std::to_string(r.sample) + ',' + std::to_string(r.seed) + ',' + fmt(r.value) + '\n';
  }
  return out;
}

void write_results(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write("results.csv", csv_text(config, result));

  json summary;
  summary["experiment"] = to_string(config.kind);
  summary["id"] = config.id;
  summary["config_hash"] = config_hash(config);
  summary["master_seed"] = config.master_seed;
  summary["rows"] = result.rows.size();
  summary["metrics"] = result.metrics;
  json checks = json::array();
  for (const auto& c : result.checks) {
    json j = {{"name", c.name}, {"value", c.value}, {"op", c.op}, {"threshold", c.threshold}};
    if (c.op == "in") j["threshold_hi"] = c.threshold_hi;
    j["pass"] = c.pass;
    checks.push_back(j);
  }
  summary["checks"] = checks;
  summary["all_pass"] = result.all_pass();
  write("summary.json", summary.dump(2) + "\n");

  json cfg = to_json(config);
  cfg["config_hash"] = config_hash(config);
  write("config.json", cfg.dump(2) + "\n");
  if (!result.keys.empty()) shufflekey::save_keys(dir / "keys.txt", result.keys);
}

}  // namespace cimsec::expcli
