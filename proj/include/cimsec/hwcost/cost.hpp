#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cimsec/netcore/network.hpp"

namespace cimsec::hwcost {

/// Area in the table's own units, latency in ns, energy in pJ per operation.
/// Blank table cells stay empty and count as zero in sums.
struct CostRecord {
  std::string name;
  double area = 0.0;
  std::optional<double> latency;
  std::optional<double> energy;
};

/// Component records for one 128x128 RRAM weight tile ("rram.*") and one
/// SRAM shuffle array ("sram.*"), each with a stated "*.total" row.
struct CostModel {
  std::vector<CostRecord> records;
  // Weight tile positions served by one shuffle array.
  int sharing = 1;

  const CostRecord& lookup(const std::string& name) const;
  std::vector<CostRecord> components(const std::string& prefix) const;
  CostRecord component_sum(const std::string& prefix) const;
  void validate() const;
};

CostModel default_cost_model();

/// Whitespace-separated `name area latency energy` rows; `-` marks a blank
/// cell and `#` starts a comment.
CostModel load_cost_table(const std::filesystem::path& path);
void save_cost_table(const std::filesystem::path& path, const CostModel& model);

struct TileCount {
  std::vector<long long> per_layer;
  long long total = 0;
};

/// ceil(C_in*k1*k2 / 128) * ceil(C_out / 128) * weight_bits per layer.
TileCount tile_count(const netcore::NetworkSpec& net, int weight_bits);

struct ShuffleOverhead {
  double area_pct = 0.0;
  // Same ratio against the RRAM component sum instead of the stated total.
  double area_pct_component_basis = 0.0;
  double energy_pct = 0.0;
  double latency_pct = 0.0;
  long long shuffle_arrays = 0;
  long long weight_tiles = 0;
  double weight_ops = 0.0;
  double shuffle_ops = 0.0;
};

/// One shuffle array per row/column tile position of a shuffled layer,
/// shared by that position's bit planes (and by `sharing` positions).
/// Every input bit cycle of every output position activates each weight tile
/// once, and each shuffled plane of each tile position pulls one shuffled
/// vector from its array. Latency is the serial upper bound with no overlap.
ShuffleOverhead shuffle_overhead(const netcore::NetworkSpec& net, int weight_bits,
                                 const std::vector<int>& shuffled_layers, int shuffled_planes,
                                 const CostModel& model);

}  // namespace cimsec::hwcost
