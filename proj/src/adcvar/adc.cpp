#include "cimsec/adcvar/adc.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cimsec/rng.hpp"

namespace cimsec::adcvar {

std::string to_string(AdcKind kind) { return kind == AdcKind::kFlash ? "flash" : "sar"; }

AdcKind parse_adc_kind(const std::string& name) {
  if (name == "flash") return AdcKind::kFlash;
  if (name == "sar") return AdcKind::kSar;
  throw std::invalid_argument("unknown ADC kind '" + name + "' (expected flash or sar)");
}

void AdcConfig::validate() const {
  if (bits < 1 || bits > 8) throw std::invalid_argument("AdcConfig: bits must be in 1..8");
  if (static_cast<int>(pass_rate.size()) != levels()) {
    throw std::invalid_argument("AdcConfig: pass-rate curve has " + std::to_string(pass_rate.size()) +
                                " levels, expected " + std::to_string(levels()));
  }
  for (double p : pass_rate) {
    if (!(p > 0.5 && p <= 1.0)) throw std::invalid_argument("AdcConfig: pass rates must lie in (0.5, 1]");
  }
  if (!(level_spacing > 0.0)) throw std::invalid_argument("AdcConfig: level spacing must be > 0");
  if (adcs_per_tile * columns_per_adc != 128) {
    throw std::invalid_argument("AdcConfig: adcs_per_tile * columns_per_adc must equal 128");
  }
}

AdcConfig make_adc_config(AdcKind kind, const std::string& wl_label, int bits) {
  AdcConfig c;
  c.kind = kind;
  c.bits = bits;
  c.level_spacing = static_cast<double>(kMaxPsum) / c.levels();
  c.wl_label = wl_label;
  c.pass_rate = builtin_passrate_preset(wl_label, c.levels());
  c.validate();
  return c;
}

double pass_rate_to_sigma(double p, double half_step) {
  if (!(p > 0.5) || p > 1.0) throw std::invalid_argument("pass_rate_to_sigma: p must lie in (0.5, 1]");
  if (p == 1.0) return 0.0;
  static const boost::math::normal_distribution<double> unit;
  return half_step / boost::math::quantile(unit, p);
}

std::vector<std::string> passrate_presets() { return {"ideal", "WL4", "WL5", "WL6"}; }

std::vector<double> builtin_passrate_preset(const std::string& wl_label, int levels) {
  // Calibration endpoints (level 1, top level); pass rate falls as the
  // column current grows.
  double hi = 1.0;
  double lo = 1.0;
  if (wl_label == "WL6") {
    hi = 0.88;
    lo = 0.78;
  } else if (wl_label == "WL5") {
    hi = 0.80;
    lo = 0.70;
  } else if (wl_label == "WL4") {
    hi = 0.72;
    lo = 0.62;
  } else if (wl_label != "ideal") {
    throw std::invalid_argument("unknown W/L preset '" + wl_label + "'");
  }
  std::vector<double> curve(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) {
    const double t = levels > 1 ? static_cast<double>(k) / (levels - 1) : 0.0;
    curve[k] = hi - (hi - lo) * std::pow(t, 1.5);
  }
  return curve;
}

std::vector<double> load_pass_rate_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pass-rate curve " + path.string());
  std::vector<double> curve;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && line.find_first_not_of("0123456789.,-+eE \t\r") != std::string::npos) continue;
    std::istringstream ss(line);
    int level = 0;
    char comma = 0;
    double p = 0.0;
    if (!(ss >> level >> comma >> p) || comma != ',') {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'level,pass_rate'");
    }
    if (level != static_cast<int>(curve.size()) + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": levels must be 1, 2, 3, ...");
    }
    if (!(p > 0.5 && p <= 1.0)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": pass rate must lie in (0.5, 1]");
    }
    curve.push_back(p);
  }
  if (curve.empty()) throw std::runtime_error("empty pass-rate curve " + path.string());
  return curve;
}

void save_pass_rate_curve(const std::filesystem::path& path, std::span<const double> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "level,pass_rate\n";
  char buf[64];
  for (std::size_t k = 0; k < curve.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k + 1, curve[k]);
    out << buf;
  }
}

double ChipFingerprint::deviate(std::uint64_t chip_seed, AdcKind kind, int tile, int adc, int level_index) {
  // SAR reuses one comparator for every level, so one deviate per ADC.
  const std::uint64_t level_key = kind == AdcKind::kSar ? 0xffffULL : static_cast<std::uint64_t>(level_index);
  CounterRng rng{chip_seed, 0xadcULL, static_cast<std::uint64_t>(tile), static_cast<std::uint64_t>(adc), level_key};
  return rng.normal();
}

ChipFingerprint::ChipFingerprint(std::uint64_t chip_seed, AdcConfig config, int tile_count)
    : seed_(chip_seed), config_(std::move(config)), tile_count_(tile_count) {
  config_.validate();
  if (tile_count < 0) throw std::invalid_argument("ChipFingerprint: negative tile count");
  const int levels = config_.levels();
  for (double p : config_.pass_rate) sigma_.push_back(pass_rate_to_sigma(p, config_.level_spacing / 2.0));
  const std::size_t adcs = static_cast<std::size_t>(tile_count) * config_.adcs_per_tile;
  shifts_.resize(adcs * levels);
  lut_.resize(adcs * (kMaxPsum + 1));
  std::vector<double> refs(static_cast<std::size_t>(levels));
  for (int t = 0; t < tile_count; ++t) {
    for (int a = 0; a < config_.adcs_per_tile; ++a) {
      const std::size_t base = static_cast<std::size_t>(t) * config_.adcs_per_tile + a;
      for (int k = 0; k < levels; ++k) {
        const double s = sigma_[k] == 0.0 ? 0.0 : sigma_[k] * deviate(chip_seed, config_.kind, t, a, k);
        shifts_[base * levels + k] = static_cast<float>(s);
        refs[k] = (k + 0.5) * config_.level_spacing + static_cast<double>(shifts_[base * levels + k]);
      }
      for (int psum = 0; psum <= kMaxPsum; ++psum) {
        const int code = config_.kind == AdcKind::kFlash ? quantize_flash(psum, refs)
                                                         : quantize_sar(psum, refs, config_.bits);
        lut_[base * (kMaxPsum + 1) + psum] = static_cast<std::uint8_t>(code);
      }
    }
  }
}

double ChipFingerprint::shift(int tile, int adc, int level_index) const {
  if (tile < 0 || tile >= tile_count_ || adc < 0 || adc >= config_.adcs_per_tile || level_index < 0 ||
      level_index >= config_.levels()) {
    throw std::out_of_range("ChipFingerprint::shift: index out of range");
  }
  return shifts_[(static_cast<std::size_t>(tile) * config_.adcs_per_tile + adc) * config_.levels() + level_index];
}

std::vector<double> ChipFingerprint::references(int tile, int adc) const {
  std::vector<double> refs(static_cast<std::size_t>(config_.levels()));
  for (int k = 0; k < config_.levels(); ++k) refs[k] = (k + 0.5) * config_.level_spacing + shift(tile, adc, k);
  return refs;
}

ChipFingerprint gen_fingerprint(std::uint64_t chip_seed, const AdcConfig& config, int tile_count) {
  return ChipFingerprint(chip_seed, config, tile_count);
}

std::vector<double> ideal_references(const AdcConfig& config) {
  std::vector<double> refs(static_cast<std::size_t>(config.levels()));
  for (int k = 0; k < config.levels(); ++k) refs[k] = (k + 0.5) * config.level_spacing;
  return refs;
}

int quantize_flash(int psum, std::span<const double> refs) {
  int code = 0;
  for (double r : refs) code += r < psum ? 1 : 0;
  return code;
}

int quantize_sar(int psum, std::span<const double> refs, int bits) {
  int code = 0;
  for (int b = bits - 1; b >= 0; --b) {
    const int trial = code | (1 << b);
    // Output >= trial iff the reference of level `trial` lies below psum.
    if (trial <= static_cast<int>(refs.size()) && refs[trial - 1] < psum) code = trial;
  }
  return code;
}

int quantize_adc(int psum, int tile, int adc, const AdcConfig& config, const ChipFingerprint* fp) {
  if (psum < 0 || psum > kMaxPsum) throw std::out_of_range("quantize_adc: psum outside 0..128");
  if (fp == nullptr) {
    const auto refs = ideal_references(config);
    return config.kind == AdcKind::kFlash ? quantize_flash(psum, refs) : quantize_sar(psum, refs, config.bits);
  }
  if (tile < 0 || tile >= fp->tile_count() || adc < 0 || adc >= fp->config().adcs_per_tile) {
    throw std::out_of_range("quantize_adc: tile/adc outside fingerprint");
  }
  return fp->code(tile, adc, psum);
}

double simulate_pass_rate(const AdcConfig& config, int level_index, int trials, std::uint64_t seed) {
  config.validate();
  if (trials <= 0) throw std::invalid_argument("simulate_pass_rate: trials must be > 0");
  const double half = config.level_spacing / 2.0;
  const double sigma = pass_rate_to_sigma(config.pass_rate.at(level_index), half);
  int pass = 0;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t chip = derive_key({seed, static_cast<std::uint64_t>(t)});
    const double shift = sigma * ChipFingerprint::deviate(chip, config.kind, 0, 0, level_index);
    // Psum sits half a step above the ideal reference of this level.
    const double ref = (level_index + 0.5) * config.level_spacing + shift;
    const double psum = (level_index + 1.0) * config.level_spacing;
    pass += ref < psum ? 1 : 0;
  }
  return static_cast<double>(pass) / trials;
}

}  // namespace cimsec::adcvar
