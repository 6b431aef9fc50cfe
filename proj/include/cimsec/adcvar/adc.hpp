#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cimsec::adcvar {

enum class AdcKind { kFlash, kSar };

std::string to_string(AdcKind kind);
AdcKind parse_adc_kind(const std::string& name);

// Largest partial sum a 128-row tile can produce.
inline constexpr int kMaxPsum = 128;

/// Column ADC shared by `columns_per_adc` adjacent columns of a tile.
/// pass_rate[k] belongs to reference level k + 1 (k = 0 .. levels() - 1).
struct AdcConfig {
  AdcKind kind = AdcKind::kSar;
  int bits = 5;
  double level_spacing = 128.0 / 31.0;
  std::vector<double> pass_rate;
  std::string wl_label = "ideal";
  int adcs_per_tile = 16;
  int columns_per_adc = 8;

  int levels() const { return (1 << bits) - 1; }
  int max_code() const { return levels(); }
  void validate() const;
};

/// Configuration using a built-in or file-supplied pass-rate curve; spacing
/// defaults to the full 0..128 range over 2^bits - 1 steps.
AdcConfig make_adc_config(AdcKind kind, const std::string& wl_label, int bits = 5);

/// Standard deviation of the reference shift that makes the nearest-reference
/// comparison succeed with probability p: half_step / inverse_normal_cdf(p).
/// p == 1 gives 0. Throws std::invalid_argument for p <= 0.5 or p > 1.
double pass_rate_to_sigma(double p, double half_step);

std::vector<std::string> passrate_presets();

/// Monotone non-increasing calibration curves over levels 1..levels, ordered
/// WL6 >= WL5 >= WL4 pointwise; "ideal" is all ones.
std::vector<double> builtin_passrate_preset(const std::string& wl_label, int levels = 31);

/// Text table of `level,pass_rate` rows (a header line is optional).
std::vector<double> load_pass_rate_curve(const std::filesystem::path& path);
void save_pass_rate_curve(const std::filesystem::path& path, std::span<const double> curve);

/// Per-chip reference shifts plus a precomputed psum->code table per ADC.
class ChipFingerprint {
 public:
  ChipFingerprint() = default;
  ChipFingerprint(std::uint64_t chip_seed, AdcConfig config, int tile_count);

  std::uint64_t seed() const { return seed_; }
  const AdcConfig& config() const { return config_; }
  int tile_count() const { return tile_count_; }

  // Shift (psum units) of reference `level_index` (0-based) of one ADC.
  double shift(int tile, int adc, int level_index) const;

  // Shifted reference currents of one ADC, ascending level order.
  std::vector<double> references(int tile, int adc) const;

  int code(int tile, int adc, int psum) const {
    return lut_[(static_cast<std::size_t>(tile) * config_.adcs_per_tile + adc) * (kMaxPsum + 1) + psum];
  }
  const std::uint8_t* table(int tile, int adc) const {
    return lut_.data() + (static_cast<std::size_t>(tile) * config_.adcs_per_tile + adc) * (kMaxPsum + 1);
  }

  // Standard normal deviate driving the shift, keyed on position only.
  static double deviate(std::uint64_t chip_seed, AdcKind kind, int tile, int adc, int level_index);

 private:
  std::uint64_t seed_ = 0;
  AdcConfig config_;
  int tile_count_ = 0;
  std::vector<double> sigma_;
  std::vector<float> shifts_;
  std::vector<std::uint8_t> lut_;
};

ChipFingerprint gen_fingerprint(std::uint64_t chip_seed, const AdcConfig& config, int tile_count);

// Ideal references (k + 0.5) * spacing.
std::vector<double> ideal_references(const AdcConfig& config);

/// Thermometer count: number of references strictly below psum.
int quantize_flash(int psum, std::span<const double> refs);

/// Successive approximation from the MSB over the same references. Equal to
/// quantize_flash whenever refs is ascending.
int quantize_sar(int psum, std::span<const double> refs, int bits);

/// Digitizes one partial sum. `fingerprint` null means zero offset.
int quantize_adc(int psum, int tile, int adc, const AdcConfig& config,
                 const ChipFingerprint* fingerprint);

/// Empirical nearest-reference sense pass rate at `level_index` over `trials`
/// independent chips drawn from the offset model.
double simulate_pass_rate(const AdcConfig& config, int level_index, int trials, std::uint64_t seed);

}  // namespace cimsec::adcvar
