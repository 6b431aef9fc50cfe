#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cimsec/adcvar/adc.hpp"
#include "cimsec/netcore/compute.hpp"
#include "cimsec/netcore/dataset.hpp"
#include "cimsec/netcore/network.hpp"
#include "cimsec/shufflekey/key.hpp"
#include "cimsec/xbar/tilemap.hpp"

namespace cimsec::xbar {

/// A quantized network programmed into crossbar tiles. Tile ids are global:
/// layer i owns [tile_offset[i], tile_offset[i] + maps[i].tile_count()).
struct ProgrammedNetwork {
  netcore::NetworkSpec net;
  std::vector<TileMap> maps;
  std::vector<std::vector<double>> biases;
  std::vector<int> tile_offset;
  int total_tiles = 0;
};

struct ProgramOptions {
  MappingMode conv_mode = MappingMode::kSubkernel;
  std::uint64_t fake_seed = 0;
};

/// Maps every layer; fully-connected layers always use the conventional path.
/// `keys` (indexed by layer, may be shorter) shuffles the listed layers.
ProgrammedNetwork program_network(const netcore::NetworkSpec& net, const netcore::QuantizedModel& model,
                                  const ProgramOptions& options = {},
                                  std::span<const std::optional<shufflekey::ShuffleKey>> keys = {});

/// Readout mode of a chip: exact partial sums, or ADC quantization with an
/// optional per-chip offset fingerprint (null = zero offset).
struct Chip {
  std::optional<adcvar::AdcConfig> adc;
  const adcvar::ChipFingerprint* fingerprint = nullptr;

  static Chip ideal() { return {}; }
  static Chip with_adc(const adcvar::AdcConfig& config, const adcvar::ChipFingerprint* fp = nullptr) {
    return {config, fp};
  }
  bool is_ideal() const { return !adc.has_value(); }
};

/// Keys loaded into the shuffle arrays at run time, indexed by layer.
using KeySet = std::vector<std::optional<shufflekey::ShuffleKey>>;

/// Layer-by-layer bit-serial execution. Throws std::invalid_argument when the
/// fingerprint does not cover the programmed tiles or a keyed layer has no
/// (or a mismatched) key.
std::vector<double> forward_hw(const ProgrammedNetwork& prog, std::span<const double> image,
                               const Chip& chip, const KeySet* keys = nullptr,
                               netcore::Trace* trace = nullptr);

double accuracy_hw(const ProgrammedNetwork& prog, const netcore::Dataset& data, const Chip& chip,
                   const KeySet* keys = nullptr, std::size_t limit = 0);

}  // namespace cimsec::xbar
