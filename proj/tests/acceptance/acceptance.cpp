// End-to-end acceptance run: one PASS/FAIL line per criterion, exit status 1
// if any criterion fails. Experiment criteria run the shipped configs.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/expcli/experiment.hpp"
#include "cimsec/hwcost/cost.hpp"
#include "cimsec/netcore/compute.hpp"
#include "cimsec/netcore/network.hpp"
#include "cimsec/netcore/qtensor.hpp"
#include "cimsec/netcore/train.hpp"
#include "cimsec/rng.hpp"
#include "cimsec/shufflekey/bounds.hpp"
#include "cimsec/shufflekey/key.hpp"
#include "cimsec/threatbench/bench.hpp"
#include "cimsec/xbar/engine.hpp"

namespace ex = cimsec::expcli;
namespace nc = cimsec::netcore;
namespace av = cimsec::adcvar;
namespace sk = cimsec::shufflekey;
namespace tb = cimsec::threatbench;
namespace xb = cimsec::xbar;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ex::ExperimentConfig shipped(const std::string& name) { return ex::load_config(fs::path(CIMSEC_CONFIG_DIR) / name); }

// Every check of a run must pass; failures are listed with their values.
void require_checks(Outcome& o, const ex::RunResult& r, const std::string& tag) {
  for (const auto& c : r.checks) {
    if (!c.pass) o.require(false, tag + " " + c.name + " = " + fmt("%.4f", c.value) + " (" + c.op + " " + fmt("%g", c.threshold) + ")");
  }
  if (r.checks.empty()) o.require(false, tag + " produced no checks");
}

double metric(const ex::RunResult& r, const std::string& a, const std::string& b = "") {
  const auto& m = b.empty() ? r.metrics.at(a) : r.metrics.at(a).at(b);
  return m.get<double>();
}

std::vector<double> sparse_image(std::size_t size, std::uint64_t seed) {
  cimsec::CounterRng rng{seed};
  std::vector<double> x(size);
  for (auto& v : x) v = rng.uniform() < 0.6 ? 0.0 : rng.uniform();
  return x;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Results shared between criteria so no experiment runs twice.
struct Shared {
  ex::ExperimentConfig clone_cfg, bounds_cfg, cost_cfg;
  ex::RunResult clone, bounds, cost;
};
Shared shared;

Outcome shuffle_exactness() {
  Outcome o;
  const auto net = nc::make_network("cnn_desk", 3, 16, 16, 10, 4);
  const auto qm = nc::quantize_model(net, nc::init_model(net, 101));
  const auto plain = xb::program_network(net, qm);
  auto cfg = av::make_adc_config(av::AdcKind::kSar, "WL4");
  cfg.level_spacing = 1.0;
  const auto fp = av::gen_fingerprint(55, cfg, plain.total_tiles);
  const std::vector<xb::Chip> chips{xb::Chip::ideal(), xb::Chip::with_adc(cfg, &fp)};
  const auto layers = tb::default_shuffle_layers(net);
  int compared = 0, zero_keys = 0;
  for (std::uint64_t key = 0; key < 100; ++key) {
    xb::KeySet keys(net.layers.size());
    for (int li : layers) {
      const int N = net.layers[li].c_in;
      // Every fifth key carries no zeros; the rest cover k up to N.
      const int k = key % 5 == 0 ? 0 : std::vector<int>{1, 3, N / 2, N}[key % 4];
      zero_keys += k > 0;
      keys[li] = sk::gen_key(cimsec::derive_key({0xacc1, key, static_cast<std::uint64_t>(li)}), li, N, k,
                             {0, 1, 2, 3});
    }
    const auto prog = xb::program_network(net, qm, {xb::MappingMode::kSubkernel, key}, keys);
    for (std::uint64_t img = 0; img < 2; ++img) {
      const auto x = sparse_image(net.input_size(), key * 7 + img);
      for (const auto& chip : chips) {
        if (xb::forward_hw(prog, x, chip, &keys) != xb::forward_hw(plain, x, chip)) {
          o.require(false, "key " + std::to_string(key) + " logits differ");
        }
        ++compared;
      }
    }
  }
  if (o.pass) o.detail = std::to_string(compared) + " logit vectors bit-identical, " + std::to_string(zero_keys) + " layer keys with zeros";
  return o;
}

Outcome random_key_attack() {
  Outcome o;
  const auto r = ex::run_experiment(shipped("key_attack.json"));
  require_checks(o, r, "key_attack");
  if (o.pass) {
    o.detail = fmt("baseline %.4f, true key %.4f, random-key median %.4f", metric(r, "baseline"), metric(r, "true_key"),
                   metric(r, "random_key", "median"));
  }
  return o;
}

Outcome clone_attack() {
  Outcome o;
  shared.clone_cfg = shipped("clone_attack.json");
  shared.clone = ex::run_experiment(shared.clone_cfg);
  require_checks(o, shared.clone, "clone_attack");
  if (o.pass) o.detail = fmt("victim %.4f, clone median %.4f", metric(shared.clone, "victim"), metric(shared.clone, "clones", "median"));
  return o;
}

Outcome offset_orderings() {
  Outcome o;
  const auto cfg = shipped("offset_sensitivity.json");
  o.require(cfg.offset.chips >= 10, "fewer than 10 chips per cell");
  const auto r = ex::run_experiment(cfg);
  require_checks(o, r, "offset");
  if (o.pass) o.detail = std::to_string(r.checks.size()) + " orderings hold";
  return o;
}

Outcome probability_bounds() {
  Outcome o;
  double worst = 0.0;
  for (int n = 0; n <= 20; ++n) {
    const double expect = 1.0 / std::tgamma(n + 1.0);
    worst = std::max(worst, std::abs(sk::bound_no_insert(128, n) - expect) / expect);
  }
  o.require(worst <= 1e-12, fmt("no-insert bound rel error %.3g", worst));
  for (int N = 1; N <= 7; ++N) {
    const auto e = sk::enumerate_match_distribution(N);
    const auto f = sk::rencontres_distribution(N);
    for (std::size_t n = 0; n < e.size(); ++n) {
      if (std::abs(e[n] - f[n]) > 1e-15) o.require(false, "enumeration differs at N " + std::to_string(N));
    }
  }
  shared.bounds_cfg = shipped("bounds.json");
  shared.bounds = ex::run_experiment(shared.bounds_cfg);
  require_checks(o, shared.bounds, "N128");
  require_checks(o, ex::run_experiment(shipped("bounds_n32.json")), "N32");
  if (o.pass) o.detail = fmt("max rel error %.2g, MC freq(n>=2) %.4f", worst, metric(shared.bounds, "mc_freq_at_least_2"));
  return o;
}

Outcome adc_fidelity() {
  Outcome o;
  auto ideal = av::make_adc_config(av::AdcKind::kFlash, "ideal");
  for (int psum = 0; psum <= av::kMaxPsum; ++psum) {
    const int expect = std::clamp(static_cast<int>(std::ceil(psum / ideal.level_spacing - 0.5)), 0, ideal.max_code());
    if (av::quantize_adc(psum, 0, 0, ideal, nullptr) != expect) o.require(false, "zero-offset code at psum " + std::to_string(psum));
  }
  double worst = 0.0;
  for (auto kind : {av::AdcKind::kFlash, av::AdcKind::kSar}) {
    for (const char* wl : {"WL6", "WL5", "WL4"}) {
      const auto cfg = av::make_adc_config(kind, wl);
      for (int level = 0; level < cfg.levels(); ++level) {
        worst = std::max(worst, std::abs(av::simulate_pass_rate(cfg, level, 10000, 17 + level) - cfg.pass_rate[level]));
      }
    }
  }
  o.require(worst <= 0.02, fmt("pass-rate deviation %.4f", worst));
  const double sigma = av::pass_rate_to_sigma(0.9772, 0.5);
  o.require(std::abs(sigma - 0.2501) <= 0.0005, fmt("sigma %.5f", sigma));
  if (o.pass) o.detail = fmt("max pass-rate deviation %.4f, sigma %.5f", worst, sigma);
  return o;
}

// Nearest signed level by exhaustive search, ties away from zero.
int nearest_level(double w, double step, int bits) {
  const int z = 1 << (bits - 1);
  int best = -z;
  for (int l = -z + 1; l < z; ++l) {
    const double err = std::abs(w - l * step), best_err = std::abs(w - best * step);
    if (err < best_err || (err == best_err && std::abs(l) > std::abs(best))) best = l;
  }
  return best;
}

Outcome numerical_core() {
  Outcome o;
  nc::NetworkSpec net;
  net.name = "probe";
  net.classes = 3;
  net.layers.push_back({nc::LayerKind::kConv, 2, 3, 3, 3, 4, 4, 4});
  net.pool_after.push_back(true);
  net.layers.push_back({nc::LayerKind::kFullyConnected, 3 * 2 * 2, 3, 1, 1, 1, 1, 4});
  net.pool_after.push_back(false);
  net.validate();
  auto m = nc::init_model(net, 5);
  cimsec::CounterRng rng{9};
  for (auto& b : m.biases) {
    for (auto& v : b) v = 0.1 * rng.normal();
  }
  std::vector<double> x(net.input_size());
  for (auto& v : x) v = rng.uniform();
  nc::Trace trace;
  nc::forward_float(net, m, x, &trace);
  std::vector<double> dlogits(3);
  nc::cross_entropy(trace.logits(), 1, dlogits);
  auto grads = nc::Gradients::zeros_like(m);
  nc::backward(net, m.weights, trace, dlogits, grads);
  const double h = 1e-3;
  double worst = 0.0, worst_abs = 0.0;
  int checked = 0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = nc::cross_entropy(nc::forward_float(net, m, x), 1);
    param = keep - h;
    const double down = nc::cross_entropy(nc::forward_float(net, m, x), 1);
    param = keep;
    const double numeric = (up - down) / (2 * h);
    const double diff = std::abs(numeric - analytic);
    worst_abs = std::max(worst_abs, diff);
    if (diff > 1e-7) worst = std::max(worst, diff / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
    ++checked;
  };
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    for (std::size_t i = 0; i < m.weights[l].size(); ++i) probe(m.weights[l][i], grads.weights[l][i]);
    for (std::size_t i = 0; i < m.biases[l].size(); ++i) probe(m.biases[l][i], grads.biases[l][i]);
  }
  o.require(worst <= 1e-4, fmt("gradient rel error %.3g", worst));
  int mismatches = 0;
  for (int bits : {2, 4, 8}) {
    std::vector<double> w(1000);
    for (auto& v : w) v = 2.0 * rng.uniform() - 1.0;
    const auto q = nc::quantize_weights(w, bits);
    double s = 0.0;
    for (double v : w) s = std::max(s, std::abs(v));
    const double step = 2.0 * s / ((1 << bits) - 1);
    for (std::size_t i = 0; i < w.size(); ++i) mismatches += q.signed_value(i) != nearest_level(w[i], step, bits);
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " quantized values off the nearest level");
  if (o.pass) o.detail = fmt("%.0f gradients, max abs error %.2g, max rel error %.2g; 3000 quantized values exact", checked, worst_abs, worst);
  return o;
}

Outcome hardware_cost() {
  Outcome o;
  shared.cost_cfg = shipped("cost.json");
  shared.cost = ex::run_experiment(shared.cost_cfg);
  require_checks(o, shared.cost, "cost");
  const auto m = cimsec::hwcost::default_cost_model();
  const double sram = m.component_sum("sram").area;
  o.require(std::abs(sram - 8645.652) <= 1e-3, fmt("SRAM area sum %.4f", sram));
  const auto rram = m.component_sum("rram");
  o.require(std::abs(*rram.latency - 145.813) <= 0.01 && std::abs(*rram.energy - 150.5) <= 0.01,
            fmt("RRAM latency %.3f energy %.3f", *rram.latency, *rram.energy));
  if (o.pass) o.detail = fmt("SRAM area %.3f, RRAM latency %.3f, energy %.2f", sram, *rram.latency, *rram.energy);
  return o;
}

Outcome msb_criticality() {
  Outcome o;
  auto cfg = shipped("sweep_bit_planes.json");
  cfg.sweep.points = {2};
  const auto r = ex::run_experiment(cfg);
  require_checks(o, r, "bit_planes");
  if (o.pass) o.detail = fmt("2 MSB planes shuffled: median %.4f (baseline %.4f)", metric(r, "median", "2 MSB planes"), metric(r, "baseline"));
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto root = fs::temp_directory_path() / ("cimsec_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::tuple<std::string, const ex::ExperimentConfig*, const ex::RunResult*>> runs{
      {"bounds", &shared.bounds_cfg, &shared.bounds},
      {"cost", &shared.cost_cfg, &shared.cost},
      {"clone", &shared.clone_cfg, &shared.clone}};
  for (const auto& [name, cfg, first] : runs) {
    if (first->rows.empty()) {
      o.require(false, name + " has no first run");
      continue;
    }
    ex::write_results(*cfg, *first, root / name / "a");
    const auto emitted = ex::load_config(root / name / "a" / "config.json");
    ex::write_results(emitted, ex::run_experiment(emitted), root / name / "b");
    const auto a = slurp(root / name / "a" / "results.csv");
    o.require(!a.empty() && a == slurp(root / name / "b" / "results.csv"), name + " CSV differs on rerun");
  }
  fs::remove_all(root);
  if (o.pass) o.detail = "bounds, cost and clone reruns from emitted configs are byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"shuffle with true key is exact", shuffle_exactness},
      {"random keys destroy accuracy", random_key_attack},
      {"clone chips lose accuracy", clone_attack},
      {"offset sensitivity orderings", offset_orderings},
      {"match-probability bounds", probability_bounds},
      {"ADC model fidelity", adc_fidelity},
      {"gradients and quantization", numerical_core},
      {"hardware cost", hardware_cost},
      {"MSB planes are critical", msb_criticality},
      {"deterministic reruns", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::printf("%s %2zu %-32s %s [%.0fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
