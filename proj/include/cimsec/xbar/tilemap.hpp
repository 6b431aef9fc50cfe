#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "cimsec/netcore/network.hpp"
#include "cimsec/netcore/qtensor.hpp"
#include "cimsec/shufflekey/key.hpp"

namespace cimsec::xbar {

inline constexpr int kTileRows = 128;
inline constexpr int kTileCols = 128;
// One column per tile carries the zero-reference pattern.
inline constexpr int kDataColumnsPerTile = kTileCols - 1;

using Bits128 = std::array<std::uint64_t, 2>;

inline void set_bit(Bits128& b, int i) { b[i >> 6] |= std::uint64_t{1} << (i & 63); }
inline bool test_bit(const Bits128& b, int i) { return (b[i >> 6] >> (i & 63)) & 1u; }
inline int popcount_and(const Bits128& a, const Bits128& b) {
  return std::popcount(a[0] & b[0]) + std::popcount(a[1] & b[1]);
}

enum class MappingMode { kConventional, kSubkernel };

/// One 128x128 binary array. Row r of the tile is physical row
/// row_begin + r of its bit plane; column c < width() holds output channel
/// col_begin + c and column dummy_column holds the zero reference.
struct Tile {
  int plane = 0;
  int row_begin = 0;
  int row_end = 0;
  int col_begin = 0;
  int col_end = 0;
  int dummy_column = 0;
  std::array<Bits128, kTileCols> columns{};

  int height() const { return row_end - row_begin; }
  int width() const { return col_end - col_begin; }
  bool cell(int r, int c) const { return test_bit(columns[c], r); }
};

/// Physical row order of one bit plane. row_source[i] is the flattened
/// receptive-field row feeding physical row i, or -1 for a fake row.
struct PlaneLayout {
  std::vector<int> row_source;
  std::vector<std::pair<int, int>> segments;  // tiles never straddle a segment
  bool keyed = false;
  std::vector<int> tiles;  // indices into TileMap::tiles
};

struct TileMap {
  int layer = 0;
  MappingMode mode = MappingMode::kConventional;
  netcore::LayerSpec spec;
  int bits = 0;
  int zero_code = 0;
  double scale = 1.0;
  std::vector<PlaneLayout> planes;  // index = weight significance bit
  std::vector<Tile> tiles;
  // Geometry of the key this map was programmed with (empty when unkeyed).
  std::vector<int> key_block_n;
  std::vector<int> key_block_k;

  int tile_count() const { return static_cast<int>(tiles.size()); }
  bool keyed() const { return !key_block_n.empty(); }
};

/// Builds the physical row order of a plane for a layer, optionally keyed.
PlaneLayout build_layout(const netcore::LayerSpec& layer, MappingMode mode,
                         const shufflekey::ShuffleKey* key);

/// Each output channel is one column holding the stretched C_in*k1*k2 kernel;
/// the column is partitioned into ceil(len / 128) row tiles.
TileMap map_conventional(const netcore::LayerSpec& layer, const netcore::QTensor& qw, int layer_id = 0);

/// One C_in x C_out sub-kernel matrix per kernel position, each on its own tiles.
/// Throws std::invalid_argument for fully-connected layers.
TileMap map_subkernel(const netcore::LayerSpec& layer, const netcore::QTensor& qw, int layer_id = 0);

/// Full mapping entry point; `key` permutes the rows of its shuffled planes
/// and fake rows are filled from `fake_seed`.
TileMap map_layer(const netcore::LayerSpec& layer, const netcore::QTensor& qw, MappingMode mode,
                  int layer_id, const shufflekey::ShuffleKey* key = nullptr,
                  std::uint64_t fake_seed = 0);

/// Dense weight codes recovered from the tiles (inverse of the mapping).
netcore::QTensor reconstruct_codes(const TileMap& map);

/// Reprograms a map with rows shuffled by `key` (fake rows random).
TileMap apply_key_to_weights(const TileMap& map, const shufflekey::ShuffleKey& key,
                             std::uint64_t fake_seed);

/// Reprograms a keyed map in natural row order.
TileMap remove_key(const TileMap& map);

/// psum[c] = sum_r input[r] * tile[r][c] for every column including the dummy.
/// `input_bits` holds 0/1 values, one per tile row.
std::vector<int> tile_vmm(std::span<const std::uint8_t> input_bits, const Tile& tile);

/// One readout: ADC code (or exact psum) of a column in one cycle, with the
/// dummy-column code of the same tile and cycle (0 when not subtracted).
struct CycleReadout {
  int input_bit = 0;
  int plane = 0;
  int code = 0;
  int dummy_code = 0;
};

/// sum over readouts of (code - dummy_code) * 2^input_bit * 2^plane.
std::int64_t shift_add(std::span<const CycleReadout> readouts);

}  // namespace cimsec::xbar
