#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/rng.hpp"

namespace av = cimsec::adcvar;
namespace fs = std::filesystem;

TEST(Sigma, FromPassRate) {
  EXPECT_NEAR(av::pass_rate_to_sigma(0.9772, 0.5), 0.2501, 0.0005);
  EXPECT_EQ(av::pass_rate_to_sigma(1.0, 0.5), 0.0);
  EXPECT_THROW(av::pass_rate_to_sigma(0.5, 0.5), std::invalid_argument);
  EXPECT_THROW(av::pass_rate_to_sigma(1.01, 0.5), std::invalid_argument);
}

TEST(Quantize, WorkedExamples) {
  const auto cfg = av::make_adc_config(av::AdcKind::kSar, "ideal");
  EXPECT_NEAR(cfg.level_spacing, 128.0 / 31.0, 1e-12);
  EXPECT_EQ(av::quantize_adc(13, 0, 0, cfg, nullptr), 3);
  auto refs = av::ideal_references(cfg);
  for (auto& r : refs) r -= 2.0;
  EXPECT_EQ(av::quantize_flash(13, refs), 4);
  EXPECT_EQ(av::quantize_sar(13, refs, cfg.bits), 4);
}

TEST(Quantize, ZeroOffsetIsUniformQuantization) {
  for (double spacing : {128.0 / 31.0, 1.0, 2.5}) {
    auto cfg = av::make_adc_config(av::AdcKind::kFlash, "ideal");
    cfg.level_spacing = spacing;
    for (int psum = 0; psum <= av::kMaxPsum; ++psum) {
      // Round half down onto the level grid, then saturate.
      const int expect = std::clamp(static_cast<int>(std::ceil(psum / spacing - 0.5)), 0, cfg.max_code());
      ASSERT_EQ(av::quantize_adc(psum, 0, 0, cfg, nullptr), expect) << "spacing " << spacing << " psum " << psum;
    }
  }
}

TEST(Quantize, SarEqualsFlashOnAscendingReferences) {
  cimsec::CounterRng rng{21};
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 3 + static_cast<int>(rng.below(4));
    std::vector<double> refs(static_cast<std::size_t>((1 << bits) - 1));
    double r = rng.uniform() * 2.0;
    for (auto& v : refs) {
      v = r;
      r += 0.1 + rng.uniform() * 5.0;
    }
    for (int psum = 0; psum <= av::kMaxPsum; ++psum) {
      ASSERT_EQ(av::quantize_sar(psum, refs, bits), av::quantize_flash(psum, refs));
    }
  }
}

TEST(Quantize, MonotoneUnderAnyFingerprint) {
  for (auto kind : {av::AdcKind::kFlash, av::AdcKind::kSar}) {
    auto cfg = av::make_adc_config(kind, "WL4");
    cfg.level_spacing = 1.0;
    const av::ChipFingerprint fp(99, cfg, 4);
    for (int tile = 0; tile < 4; ++tile) {
      for (int adc = 0; adc < cfg.adcs_per_tile; ++adc) {
        for (int psum = 1; psum <= av::kMaxPsum; ++psum) {
          ASSERT_GE(fp.code(tile, adc, psum), fp.code(tile, adc, psum - 1));
        }
      }
    }
  }
}

TEST(Fingerprint, SarSharesOneDeviatePerAdc) {
  const auto cfg = av::make_adc_config(av::AdcKind::kSar, "WL5");
  const double a = av::ChipFingerprint::deviate(5, av::AdcKind::kSar, 2, 3, 0);
  EXPECT_EQ(a, av::ChipFingerprint::deviate(5, av::AdcKind::kSar, 2, 3, 17));
  EXPECT_NE(av::ChipFingerprint::deviate(5, av::AdcKind::kFlash, 2, 3, 0),
            av::ChipFingerprint::deviate(5, av::AdcKind::kFlash, 2, 3, 17));
  const auto fp = av::gen_fingerprint(5, cfg, 3);
  const auto again = av::gen_fingerprint(5, cfg, 3);
  for (int psum = 0; psum <= av::kMaxPsum; ++psum) EXPECT_EQ(fp.code(2, 3, psum), again.code(2, 3, psum));
}

TEST(PassRate, SimulationReproducesCurve) {
  for (auto kind : {av::AdcKind::kFlash, av::AdcKind::kSar}) {
    const auto cfg = av::make_adc_config(kind, "WL5");
    for (int level = 0; level < cfg.levels(); level += 5) {
      EXPECT_NEAR(av::simulate_pass_rate(cfg, level, 10000, 3), cfg.pass_rate[level], 0.02) << level;
    }
  }
}

TEST(PassRate, FingerprintShiftsReproduceCurve) {
  // 625 tiles x 16 ADCs = 10^4 independent references per level.
  auto cfg = av::make_adc_config(av::AdcKind::kFlash, "WL4");
  const av::ChipFingerprint fp(12, cfg, 625);
  const double half = cfg.level_spacing / 2;
  for (int level : {0, 15, 30}) {
    int pass = 0;
    for (int t = 0; t < 625; ++t) {
      for (int a = 0; a < cfg.adcs_per_tile; ++a) pass += fp.shift(t, a, level) < half;
    }
    EXPECT_NEAR(pass / 10000.0, cfg.pass_rate[level], 0.02) << level;
  }
}

TEST(Presets, MonotoneAndOrdered) {
  const auto w6 = av::builtin_passrate_preset("WL6");
  const auto w5 = av::builtin_passrate_preset("WL5");
  const auto w4 = av::builtin_passrate_preset("WL4");
  for (std::size_t i = 0; i < w6.size(); ++i) {
    EXPECT_GE(w6[i], w5[i]);
    EXPECT_GE(w5[i], w4[i]);
    if (i > 0) {
      EXPECT_LE(w6[i], w6[i - 1]);
      EXPECT_LE(w4[i], w4[i - 1]);
    }
  }
  const auto ideal = av::builtin_passrate_preset("ideal");
  EXPECT_TRUE(std::all_of(ideal.begin(), ideal.end(), [](double p) { return p == 1.0; }));
  EXPECT_THROW(av::builtin_passrate_preset("WL9"), std::invalid_argument);
}

TEST(Presets, CurveFileRoundTrip) {
  const auto dir = fs::temp_directory_path() / ("cimsec_curve_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto curve = av::builtin_passrate_preset("WL5");
  av::save_pass_rate_curve(dir / "c.csv", curve);
  const auto back = av::load_pass_rate_curve(dir / "c.csv");
  ASSERT_EQ(back.size(), curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_NEAR(back[i], curve[i], 1e-12);

  std::ofstream(dir / "gap.csv") << "level,pass_rate\n1,0.9\n3,0.8\n";
  EXPECT_ANY_THROW(av::load_pass_rate_curve(dir / "gap.csv"));
  std::ofstream(dir / "low.csv") << "1,0.4\n";
  EXPECT_ANY_THROW(av::load_pass_rate_curve(dir / "low.csv"));
  fs::remove_all(dir);
}

TEST(Config, Validation) {
  auto cfg = av::make_adc_config(av::AdcKind::kSar, "WL6");
  cfg.pass_rate.pop_back();
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(av::parse_adc_kind("pipeline"), std::invalid_argument);
  EXPECT_EQ(av::parse_adc_kind("flash"), av::AdcKind::kFlash);
}
