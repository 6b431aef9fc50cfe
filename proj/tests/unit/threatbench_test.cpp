#include <gtest/gtest.h>

#include "cimsec/netcore/train.hpp"
#include "cimsec/threatbench/bench.hpp"

namespace tb = cimsec::threatbench;
namespace nc = cimsec::netcore;
namespace av = cimsec::adcvar;
namespace xb = cimsec::xbar;

namespace {

struct Fixture {
  nc::Dataset data;
  nc::NetworkSpec net;
  nc::FloatModel model;
};

const Fixture& trained() {
  static const Fixture f = [] {
    Fixture x;
    nc::SyntheticSpec s;
    s.train_count = 600;
    s.test_count = 200;
    x.data = nc::make_synthetic(s);
    x.net = nc::make_network("cnn_desk", 3, 12, 12, 10, 4);
    x.model = nc::init_model(x.net, 4);
    nc::Hyperparams h;
    h.learning_rate = 0.01;
    h.epochs = 1;
    h.quantization_aware = true;
    nc::train_float(x.net, x.model, x.data, h, 5);
    return x;
  }();
  return f;
}

}  // namespace

TEST(Summary, MedianOfOddAndEven) {
  const auto odd = tb::summarize({0.3, 0.1, 0.2});
  EXPECT_DOUBLE_EQ(odd.median, 0.2);
  EXPECT_DOUBLE_EQ(odd.min, 0.1);
  EXPECT_DOUBLE_EQ(odd.max, 0.3);
  EXPECT_DOUBLE_EQ(tb::summarize({0.4, 0.1, 0.2, 0.3}).median, 0.25);
  EXPECT_EQ(tb::summarize({0.5}).count, 1u);
}

TEST(Population, SeedsAreDistinct) {
  const auto cfg = av::make_adc_config(av::AdcKind::kSar, "WL5");
  const auto pop = tb::ChipPopulation::make(9, 21, cfg);
  ASSERT_EQ(pop.seeds.size(), 21u);
  std::vector<std::uint64_t> s = pop.seeds;
  std::sort(s.begin(), s.end());
  EXPECT_EQ(std::unique(s.begin(), s.end()), s.end());
  auto broken = pop;
  broken.victim = 30;
  EXPECT_ANY_THROW(broken.validate());
}

TEST(Threats, ZeroOffsetPopulationHasNoDrop) {
  const auto& f = trained();
  auto cfg = av::make_adc_config(av::AdcKind::kSar, "ideal");
  cfg.level_spacing = 1.0;
  tb::HwSetup setup;
  setup.eval_limit = 100;
  const double base = tb::baseline_accuracy(f.net, f.model, f.data, cfg, setup);
  for (std::uint64_t chip : {1ULL, 2ULL, 3ULL}) {
    EXPECT_EQ(tb::chip_accuracy(f.net, f.model, f.data, cfg, chip, setup), base);
  }
}

TEST(Threats, TrueKeyRestoresBaseline) {
  const auto& f = trained();
  tb::HwSetup setup;
  setup.eval_limit = 100;
  tb::ShuffleSpec spec;
  spec.layers = tb::default_shuffle_layers(f.net);
  EXPECT_EQ(spec.layers, (std::vector<int>{1, 2}));
  spec.zeros = 3;
  const auto r = tb::random_key_attack(f.net, f.model, f.data, xb::Chip::ideal(), spec, 3, 7, setup);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_EQ(r.points[0].samples.front(),
            nc::accuracy_quantized(f.net, nc::quantize_model(f.net, f.model), f.data, setup.eval_limit));
  EXPECT_EQ(r.points[1].samples.size(), 3u);
  spec.layers.clear();
  EXPECT_THROW(tb::random_key_attack(f.net, f.model, f.data, xb::Chip::ideal(), spec, 3, 7, setup),
               std::invalid_argument);
}

TEST(Threats, RetrainingIsBoundedAndDeterministic) {
  const auto& f = trained();
  auto cfg = av::make_adc_config(av::AdcKind::kSar, "WL5");
  cfg.level_spacing = 1.0;
  tb::HwSetup setup;
  setup.eval_limit = 50;
  nc::Hyperparams h;
  h.learning_rate = 0.01;
  EXPECT_THROW(tb::retrain_on_chip(f.net, f.model, f.data, cfg, nullptr, 3, h, 1, setup, 64), std::invalid_argument);
  const auto a = tb::retrain_on_chip(f.net, f.model, f.data, cfg, nullptr, 1, h, 1, setup, 64);
  const auto b = tb::retrain_on_chip(f.net, f.model, f.data, cfg, nullptr, 1, h, 1, setup, 64);
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.curve.size(), 1u);
  EXPECT_NE(a.model.weights, f.model.weights);
}

TEST(Sweeps, MatchedDigitsEndsAtTrueKey) {
  const auto& f = trained();
  tb::HwSetup setup;
  setup.eval_limit = 60;
  tb::ShuffleSpec spec;
  const auto r = tb::sweep_shuffle_config(f.net, f.model, f.data, xb::Chip::ideal(), tb::SweepAxis::kMatchedDigits,
                                          spec, 2, 3, setup, {0, 16});
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_EQ(r.points[1].samples.size(), 1u);
  EXPECT_EQ(r.points[1].samples[0],
            nc::accuracy_quantized(f.net, nc::quantize_model(f.net, f.model), f.data, setup.eval_limit));
  EXPECT_THROW(tb::parse_sweep_axis("diagonal"), std::invalid_argument);
  EXPECT_EQ(tb::parse_sweep_axis("bit_planes"), tb::SweepAxis::kBitPlanes);
}
