#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cimsec/hwcost/cost.hpp"
#include "cimsec/netcore/network.hpp"

namespace hc = cimsec::hwcost;
namespace nc = cimsec::netcore;
namespace fs = std::filesystem;

namespace {

nc::NetworkSpec shapes_net() {
  nc::NetworkSpec net;
  net.name = "shapes";
  net.classes = 10;
  net.layers.push_back({nc::LayerKind::kConv, 3, 8, 3, 3, 4, 4, 2});
  net.layers.push_back({nc::LayerKind::kConv, 8, 128, 3, 3, 4, 4, 2});
  net.layers.push_back({nc::LayerKind::kConv, 128, 128, 3, 3, 4, 4, 2});
  net.layers.push_back({nc::LayerKind::kFullyConnected, 128 * 16, 10, 1, 1, 1, 1, 2});
  net.pool_after = {false, false, false, false};
  net.validate();
  return net;
}

}  // namespace

TEST(CostTable, ComponentSums) {
  const auto m = hc::default_cost_model();
  m.validate();
  const auto sram = m.component_sum("sram");
  const auto rram = m.component_sum("rram");
  EXPECT_NEAR(sram.area, 8645.652, 1e-3);
  EXPECT_NEAR(sram.area, m.lookup("sram.total").area, 1e-3);
  EXPECT_NEAR(*rram.latency, 145.813, 0.01);
  EXPECT_NEAR(*rram.energy, 150.5, 0.01);
  EXPECT_NEAR(*sram.latency, *m.lookup("sram.total").latency, 1e-9);
  EXPECT_NEAR(*sram.energy, *m.lookup("sram.total").energy, 1e-9);
  EXPECT_NEAR(m.lookup("rram.array").area, 855.436, 1e-9);
  EXPECT_THROW(m.lookup("rram.flux_capacitor"), std::exception);
}

TEST(CostTable, FileRoundTripAndErrors) {
  const auto dir = fs::temp_directory_path() / ("cimsec_cost_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto m = hc::default_cost_model();
  m.sharing = 4;
  hc::save_cost_table(dir / "t.txt", m);
  const auto back = hc::load_cost_table(dir / "t.txt");
  EXPECT_EQ(back.sharing, 4);
  ASSERT_EQ(back.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(back.records[i].name, m.records[i].name);
    EXPECT_DOUBLE_EQ(back.records[i].area, m.records[i].area);
    EXPECT_EQ(back.records[i].latency.has_value(), m.records[i].latency.has_value());
  }
  std::ofstream(dir / "bad.txt") << "rram.array abc 1 2\n";
  EXPECT_ANY_THROW(hc::load_cost_table(dir / "bad.txt"));
  EXPECT_ANY_THROW(hc::load_cost_table(dir / "missing.txt"));
  fs::remove_all(dir);
}

TEST(Tiles, WorkedExamples) {
  const auto tc = hc::tile_count(shapes_net(), 2);
  ASSERT_EQ(tc.per_layer.size(), 4u);
  EXPECT_EQ(tc.per_layer[0], 2);
  EXPECT_EQ(tc.per_layer[2], 18);
  EXPECT_EQ(tc.per_layer[1], 1 * 1 * 2);
  EXPECT_EQ(tc.per_layer[3], 16 * 1 * 2);
  EXPECT_EQ(tc.total, 2 + 2 + 18 + 32);
  EXPECT_EQ(hc::tile_count(shapes_net(), 8).per_layer[2], 72);
}

TEST(Overhead, AreaMatchesArrayCount) {
  const auto net = shapes_net();
  const auto m = hc::default_cost_model();
  const auto o = hc::shuffle_overhead(net, 2, {2}, 2, m);
  // Layer 2: 9 x 1 tile positions, one shuffle array each.
  EXPECT_EQ(o.shuffle_arrays, 9);
  EXPECT_EQ(o.weight_tiles, 54);
  EXPECT_NEAR(o.area_pct, 100.0 * 9 * 8645.652 / (54 * m.lookup("rram.total").area), 1e-9);
  EXPECT_NEAR(o.area_pct_component_basis, 100.0 * 9 * 8645.652 / (54 * m.component_sum("rram").area), 1e-9);
}

TEST(Overhead, AllLayerTwoBitAreaOnVgg) {
  const auto net = nc::make_network("vgg8_desk", 3, 32, 32, 10, 2);
  std::vector<int> all(net.layers.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const auto m = hc::default_cost_model();
  const auto o2 = hc::shuffle_overhead(net, 2, all, 2, m);
  EXPECT_GE(o2.area_pct, 30.0);
  EXPECT_LE(o2.area_pct, 70.0);
  const auto net8 = nc::make_network("vgg8_desk", 3, 32, 32, 10, 8);
  EXPECT_LT(hc::shuffle_overhead(net8, 8, all, 8, m).area_pct, o2.area_pct);
}

TEST(Overhead, MonotoneInLayersAndPlanes) {
  const auto net = nc::make_network("vgg8_desk", 3, 32, 32, 10, 8);
  const auto m = hc::default_cost_model();
  double prev_energy = 0.0;
  double first_step = 0.0;
  for (int p = 1; p <= 8; ++p) {
    const auto o = hc::shuffle_overhead(net, 8, {1, 2}, p, m);
    EXPECT_GT(o.energy_pct, prev_energy);
    EXPECT_GE(o.latency_pct, 0.0);
    if (p == 1) first_step = o.energy_pct;
    // Linear in planes: p planes cost p times one plane.
    EXPECT_NEAR(o.energy_pct, p * first_step, 1e-9 * p);
    prev_energy = o.energy_pct;
  }
  double prev_area = 0.0;
  for (int n = 1; n <= 6; ++n) {
    std::vector<int> layers;
    for (int i = 0; i < n; ++i) layers.push_back(i);
    const auto o = hc::shuffle_overhead(net, 8, layers, 8, m);
    EXPECT_GE(o.area_pct, prev_area);
    prev_area = o.area_pct;
  }
  // Shallow conv layers have fewer input channels, hence fewer arrays.
  EXPECT_LT(hc::shuffle_overhead(net, 8, {1}, 8, m).area_pct, hc::shuffle_overhead(net, 8, {5}, 8, m).area_pct);
}

TEST(Overhead, SharingTradesAreaForLatency) {
  const auto net = nc::make_network("vgg8_desk", 3, 32, 32, 10, 4);
  auto m = hc::default_cost_model();
  const auto one = hc::shuffle_overhead(net, 4, {3}, 4, m);
  m.sharing = 4;
  const auto four = hc::shuffle_overhead(net, 4, {3}, 4, m);
  EXPECT_LT(four.area_pct, one.area_pct);
  EXPECT_GT(four.latency_pct, one.latency_pct);
  EXPECT_NEAR(four.energy_pct, one.energy_pct, 1e-9);
}

TEST(Overhead, RejectsBadArguments) {
  const auto net = shapes_net();
  const auto m = hc::default_cost_model();
  EXPECT_ANY_THROW(hc::shuffle_overhead(net, 2, {7}, 2, m));
  EXPECT_ANY_THROW(hc::shuffle_overhead(net, 2, {1}, 3, m));
}
