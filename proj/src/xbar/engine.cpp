#include "cimsec/xbar/engine.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>

#include "cimsec/netcore/train.hpp"

namespace cimsec::xbar {

ProgrammedNetwork program_network(const netcore::NetworkSpec& net, const netcore::QuantizedModel& model,
                                  const ProgramOptions& options,
                                  std::span<const std::optional<shufflekey::ShuffleKey>> keys) {
  net.validate();
  if (model.weights.size() != net.layers.size()) throw std::invalid_argument("program_network: layer count mismatch");
  ProgrammedNetwork prog;
  prog.net = net;
  prog.biases = model.biases;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const MappingMode mode = l.is_conv() ? options.conv_mode : MappingMode::kConventional;
    const shufflekey::ShuffleKey* key = i < keys.size() && keys[i] ? &*keys[i] : nullptr;
    prog.tile_offset.push_back(prog.total_tiles);
    prog.maps.push_back(map_layer(l, model.weights[i], mode, static_cast<int>(i), key, options.fake_seed));
    prog.total_tiles += prog.maps.back().tile_count();
  }
  return prog;
}

namespace {

// Row routing actually applied in hardware for each plane of one layer.
std::vector<const std::vector<int>*> plane_routing(const TileMap& map, std::size_t layer, const KeySet* keys,
                                                  std::vector<std::vector<int>>& storage) {
  std::vector<const std::vector<int>*> routes(map.planes.size(), nullptr);
  const shufflekey::ShuffleKey* key = nullptr;
  if (map.keyed()) {
    if (keys == nullptr || layer >= keys->size() || !(*keys)[layer]) {
      throw std::invalid_argument("forward_hw: layer " + std::to_string(layer) + " is shuffled but no key was loaded");
    }
    key = &*(*keys)[layer];
    if (key->blocks.size() != map.key_block_n.size()) {
      throw std::invalid_argument("forward_hw: key/layer mismatch at layer " + std::to_string(layer));
    }
    for (std::size_t b = 0; b < key->blocks.size(); ++b) {
      if (key->blocks[b].n != map.key_block_n[b] || key->blocks[b].k != map.key_block_k[b]) {
        throw std::invalid_argument("forward_hw: key/layer mismatch at layer " + std::to_string(layer));
      }
    }
    for (std::size_t j = 0; j < map.planes.size(); ++j) {
      const bool in_key = std::find(key->shuffled_bit_planes.begin(), key->shuffled_bit_planes.end(),
                                    static_cast<int>(j)) != key->shuffled_bit_planes.end();
      if (in_key != map.planes[j].keyed) {
        throw std::invalid_argument("forward_hw: key shuffles different bit planes than were programmed");
      }
    }
    storage.push_back(build_layout(map.spec, map.mode, key).row_source);
  }
  for (std::size_t j = 0; j < map.planes.size(); ++j) {
    routes[j] = map.planes[j].keyed ? &storage.back() : &map.planes[j].row_source;
  }
  return routes;
}

}  // namespace

std::vector<double> forward_hw(const ProgrammedNetwork& prog, std::span<const double> image, const Chip& chip,
                               const KeySet* keys, netcore::Trace* trace) {
  const auto& net = prog.net;
  if (image.size() != net.input_size()) throw std::invalid_argument("forward_hw: input size mismatch");
  const adcvar::ChipFingerprint* fp = chip.fingerprint;
  if (fp != nullptr && fp->tile_count() < prog.total_tiles) {
    throw std::invalid_argument("forward_hw: fingerprint covers " + std::to_string(fp->tile_count()) +
                                " tiles, network uses " + std::to_string(prog.total_tiles));
  }
  const adcvar::AdcConfig* adc = fp != nullptr ? &fp->config() : (chip.adc ? &*chip.adc : nullptr);
  std::array<std::uint8_t, adcvar::kMaxPsum + 1> zero_offset_lut{};
  if (adc != nullptr && fp == nullptr) {
    for (int p = 0; p <= adcvar::kMaxPsum; ++p) {
      zero_offset_lut[p] = static_cast<std::uint8_t>(adcvar::quantize_adc(p, 0, 0, *adc, nullptr));
    }
  }
  const double unit = adc != nullptr ? adc->level_spacing : 1.0;
  const int cols_per_adc = adc != nullptr ? adc->columns_per_adc : 8;

  netcore::Trace local;
  netcore::Trace& t = trace ? *trace : local;
  t.layers.resize(net.layers.size());
  std::span<const double> input = image;
  std::vector<std::uint16_t> codes;
  std::vector<std::uint16_t> phys;
  std::vector<std::int64_t> acc;

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    const TileMap& map = prog.maps[li];
    auto& lt = t.layers[li];
    const int rows = l.rows();
    const int pos = l.positions();
    const auto act = netcore::quantize_activations(input);
    codes.resize(static_cast<std::size_t>(rows) * pos);
    netcore::im2col_codes(l, act.codes, codes);
    lt.cols.resize(codes.size());
    for (std::size_t k = 0; k < codes.size(); ++k) lt.cols[k] = codes[k] * act.scale;

    std::vector<std::vector<int>> route_storage;
    route_storage.reserve(1);
    const auto routes = plane_routing(map, li, keys, route_storage);
    lt.pre.resize(static_cast<std::size_t>(l.c_out) * pos);
    acc.resize(static_cast<std::size_t>(l.c_out));

    for (int p = 0; p < pos; ++p) {
      std::fill(acc.begin(), acc.end(), 0);
      const std::uint16_t* x = codes.data() + static_cast<std::size_t>(p) * rows;
      for (int j = 0; j < map.bits; ++j) {
        const auto& route = *routes[j];
        phys.resize(route.size());
        for (std::size_t r = 0; r < route.size(); ++r) phys[r] = route[r] < 0 ? 0 : x[route[r]];
        const bool msb = j == map.bits - 1;
        for (int ti : map.planes[j].tiles) {
          const Tile& tile = map.tiles[ti];
          const int tile_id = prog.tile_offset[li] + ti;
          std::array<Bits128, netcore::kActivationBits> masks{};
          for (int r = 0; r < tile.height(); ++r) {
            const unsigned v = phys[tile.row_begin + r];
            for (int i = 0; i < netcore::kActivationBits; ++i) {
              if ((v >> i) & 1u) set_bit(masks[i], r);
            }
          }
          // Cycles with no active row read psum 0 on every column.
          int live[netcore::kActivationBits];
          int live_count = 0;
          std::int64_t idle_weight = 0;
          for (int i = 0; i < netcore::kActivationBits; ++i) {
            if (masks[i][0] | masks[i][1]) {
              live[live_count++] = i;
            } else {
              idle_weight += std::int64_t{1} << i;
            }
          }
          auto column_sum = [&](int column) -> std::int64_t {
            const Bits128& cells = tile.columns[column];
            const std::uint8_t* lut = nullptr;
            if (fp != nullptr) {
              lut = fp->table(tile_id, column / cols_per_adc);
            } else if (adc != nullptr) {
              lut = zero_offset_lut.data();
            }
            std::int64_t sum = 0;
            if (lut == nullptr) {
              for (int k = 0; k < live_count; ++k) {
                sum += static_cast<std::int64_t>(popcount_and(masks[live[k]], cells)) << live[k];
              }
              return sum;
            }
            for (int k = 0; k < live_count; ++k) {
              sum += static_cast<std::int64_t>(lut[popcount_and(masks[live[k]], cells)]) << live[k];
            }
            return sum + lut[0] * idle_weight;
          };
          for (int c = 0; c < tile.width(); ++c) acc[tile.col_begin + c] += column_sum(c) << j;
          if (msb) {
            const std::int64_t dummy = column_sum(tile.dummy_column);
            for (int c = 0; c < tile.width(); ++c) acc[tile.col_begin + c] -= dummy << j;
          }
        }
      }
      for (int co = 0; co < l.c_out; ++co) {
        lt.pre[static_cast<std::size_t>(co) * pos + p] =
            netcore::layer_output(acc[co], unit, map.scale, act.scale, prog.biases[li][co]);
      }
    }
    netcore::finish_layer(net, li, lt);
    input = lt.out;
  }
  return t.layers.back().out;
}

double accuracy_hw(const ProgrammedNetwork& prog, const netcore::Dataset& data, const Chip& chip,
                   const KeySet* keys, std::size_t limit) {
  return netcore::evaluate(data, [&](std::span<const double> x) {
    return netcore::argmax(forward_hw(prog, x, chip, keys));
  }, limit);
}

}  // namespace cimsec::xbar
