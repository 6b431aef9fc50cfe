#include "cimsec/xbar/tilemap.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "cimsec/rng.hpp"

namespace cimsec::xbar {

using shufflekey::kZero;
using shufflekey::ShuffleKey;

PlaneLayout build_layout(const netcore::LayerSpec& layer, MappingMode mode, const ShuffleKey* key) {
  const int positions = layer.k1 * layer.k2;
  std::vector<shufflekey::BlockKey> blocks;
  if (key != nullptr) {
    key->validate();
    if (key->channels() != layer.c_in) {
      throw std::invalid_argument("key covers " + std::to_string(key->channels()) + " channels, layer has " +
                                  std::to_string(layer.c_in));
    }
    blocks = key->blocks;
  } else {
    blocks = shufflekey::identity_key(0, layer.c_in, {}).blocks;
  }
  PlaneLayout out;
  out.keyed = key != nullptr;
  for (int p = 0; p < positions; ++p) {
    int base = 0;
    for (const auto& b : blocks) {
      const int begin = static_cast<int>(out.row_source.size());
      for (int a : b.assignment) out.row_source.push_back(a == kZero ? -1 : p * layer.c_in + base + a);
      if (mode == MappingMode::kSubkernel) out.segments.emplace_back(begin, static_cast<int>(out.row_source.size()));
      base += b.n;
    }
  }
  if (mode == MappingMode::kConventional) out.segments.emplace_back(0, static_cast<int>(out.row_source.size()));
  return out;
}

TileMap map_layer(const netcore::LayerSpec& layer, const netcore::QTensor& qw, MappingMode mode, int layer_id,
                  const ShuffleKey* key, std::uint64_t fake_seed) {
  layer.validate();
  qw.validate();
  if (qw.size() != layer.weight_count()) {
    throw std::invalid_argument("map: weight tensor has " + std::to_string(qw.size()) + " codes, layer needs " +
                                std::to_string(layer.weight_count()));
  }
  if (mode == MappingMode::kSubkernel && !layer.is_conv()) {
    throw std::invalid_argument("map_subkernel: fully-connected layers use the conventional mapping");
  }
  TileMap map;
  map.layer = layer_id;
  map.mode = mode;
  map.spec = layer;
  map.bits = qw.bits;
  map.zero_code = qw.zero_code;
  map.scale = qw.scale;
  if (key != nullptr) {
    for (int p : key->shuffled_bit_planes) {
      if (p >= qw.bits) throw std::invalid_argument("key shuffles bit plane " + std::to_string(p) + " of a " +
                                                    std::to_string(qw.bits) + "-bit layer");
    }
    for (const auto& b : key->blocks) {
      map.key_block_n.push_back(b.n);
      map.key_block_k.push_back(b.k);
    }
  }
  const int rows = layer.rows();
  const int col_groups = (layer.c_out + kDataColumnsPerTile - 1) / kDataColumnsPerTile;
  for (int j = 0; j < qw.bits; ++j) {
    const bool keyed = key != nullptr && std::find(key->shuffled_bit_planes.begin(), key->shuffled_bit_planes.end(),
                                                   j) != key->shuffled_bit_planes.end();
    PlaneLayout layout = build_layout(layer, mode, keyed ? key : nullptr);
    const bool dummy_bit = (qw.zero_code >> j) & 1;
    for (const auto& [seg_begin, seg_end] : layout.segments) {
      for (int r0 = seg_begin; r0 < seg_end; r0 += kTileRows) {
        const int r1 = std::min(seg_end, r0 + kTileRows);
        for (int g = 0; g < col_groups; ++g) {
          Tile t;
          t.plane = j;
          t.row_begin = r0;
          t.row_end = r1;
          t.col_begin = g * kDataColumnsPerTile;
          t.col_end = std::min(layer.c_out, t.col_begin + kDataColumnsPerTile);
          t.dummy_column = t.width();
          for (int r = r0; r < r1; ++r) {
            const int src = layout.row_source[r];
            const int local = r - r0;
            if (src < 0) {
              CounterRng rng{fake_seed, static_cast<std::uint64_t>(layer_id), static_cast<std::uint64_t>(j),
                             static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(g)};
              for (int c = 0; c <= t.width(); ++c) {
                if (rng.coin()) set_bit(t.columns[c], local);
              }
              continue;
            }
            for (int c = 0; c < t.width(); ++c) {
              const auto code = qw.codes[static_cast<std::size_t>(t.col_begin + c) * rows + src];
              if ((code >> j) & 1) set_bit(t.columns[c], local);
            }
            if (dummy_bit) set_bit(t.columns[t.dummy_column], local);
          }
          layout.tiles.push_back(static_cast<int>(map.tiles.size()));
          map.tiles.push_back(t);
        }
      }
    }
    map.planes.push_back(std::move(layout));
  }
  return map;
}

TileMap map_conventional(const netcore::LayerSpec& layer, const netcore::QTensor& qw, int layer_id) {
  return map_layer(layer, qw, MappingMode::kConventional, layer_id);
}

TileMap map_subkernel(const netcore::LayerSpec& layer, const netcore::QTensor& qw, int layer_id) {
  return map_layer(layer, qw, MappingMode::kSubkernel, layer_id);
}

netcore::QTensor reconstruct_codes(const TileMap& map) {
  const int rows = map.spec.rows();
  netcore::QTensor q;
  q.bits = map.bits;
  q.scale = map.scale;
  q.zero_code = map.zero_code;
  q.shape = {map.spec.c_out, rows};
  q.codes.assign(map.spec.weight_count(), 0);
  for (int j = 0; j < map.bits; ++j) {
    const auto& layout = map.planes[j];
    std::vector<int> cover(static_cast<std::size_t>(rows), 0);
    for (int src : layout.row_source) {
      if (src >= 0) ++cover[src];
    }
    if (std::any_of(cover.begin(), cover.end(), [](int c) { return c != 1; })) {
      throw std::logic_error("reconstruct_codes: plane rows do not cover the layer exactly once");
    }
    for (int ti : layout.tiles) {
      const Tile& t = map.tiles[ti];
      for (int r = t.row_begin; r < t.row_end; ++r) {
        const int src = layout.row_source[r];
        if (src < 0) continue;
        for (int c = 0; c < t.width(); ++c) {
          if (t.cell(r - t.row_begin, c)) {
            q.codes[static_cast<std::size_t>(t.col_begin + c) * rows + src] |= static_cast<std::uint16_t>(1u << j);
          }
        }
      }
    }
  }
  return q;
}

TileMap apply_key_to_weights(const TileMap& map, const ShuffleKey& key, std::uint64_t fake_seed) {
  return map_layer(map.spec, reconstruct_codes(map), map.mode, map.layer, &key, fake_seed);
}

TileMap remove_key(const TileMap& map) {
  return map_layer(map.spec, reconstruct_codes(map), map.mode, map.layer);
}

std::vector<int> tile_vmm(std::span<const std::uint8_t> input_bits, const Tile& tile) {
  if (static_cast<int>(input_bits.size()) != tile.height()) {
    throw std::invalid_argument("tile_vmm: input length " + std::to_string(input_bits.size()) +
                                " != tile rows " + std::to_string(tile.height()));
  }
  Bits128 in{};
  for (int r = 0; r < tile.height(); ++r) {
    if (input_bits[r] > 1) throw std::invalid_argument("tile_vmm: inputs must be 0 or 1");
    if (input_bits[r]) set_bit(in, r);
  }
  std::vector<int> psum(static_cast<std::size_t>(tile.width()) + 1);
  for (int c = 0; c <= tile.width(); ++c) psum[c] = popcount_and(in, tile.columns[c]);
  return psum;
}

std::int64_t shift_add(std::span<const CycleReadout> readouts) {
  std::int64_t acc = 0;
  for (const auto& r : readouts) {
    acc += static_cast<std::int64_t>(r.code - r.dummy_code) << (r.input_bit + r.plane);
  }
  return acc;
}

}  // namespace cimsec::xbar
