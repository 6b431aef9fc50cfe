#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cimsec::shufflekey {

// Assignment entry of a fake row driven by an inserted zero.
inline constexpr int kZero = -1;
inline constexpr int kBlockSize = 128;

/// Shuffle of one channel block: slot i of the physical array reads real
/// channel assignment[i] (0..n-1) or kZero. Holds n + k slots.
struct BlockKey {
  int n = 0;
  int k = 0;
  std::vector<int> assignment;

  int m() const { return n + k; }
  void validate() const;
  bool operator==(const BlockKey&) const = default;
};

/// Key of one layer: one block per run of up to 128 input channels, and the
/// weight bit planes whose rows are permuted.
struct ShuffleKey {
  int layer = 0;
  std::vector<BlockKey> blocks;
  std::vector<int> shuffled_bit_planes;

  int channels() const;
  void validate() const;
  bool operator==(const ShuffleKey&) const = default;
};

/// Uniform arrangement of n real channels and k zeros over n + k slots.
BlockKey gen_block_key(std::uint64_t key_seed, int n, int k);

/// Splits c_in into blocks of <= 128 channels and inserts k zeros per block.
ShuffleKey gen_key(std::uint64_t key_seed, int layer, int c_in, int k, std::vector<int> planes);

ShuffleKey identity_key(int layer, int c_in, std::vector<int> planes);

/// Random key with the same geometry as `real` matching exactly n real
/// digits (summed over blocks); the remaining real channels avoid their
/// true slots.
ShuffleKey key_with_matches(const ShuffleKey& real, int n, std::uint64_t seed);

/// Channel gather: out[i] = in[assignment[i]], or 0 for a zero slot.
template <typename T>
std::vector<T> shuffle_input(std::span<const T> block, const BlockKey& key) {
  if (static_cast<int>(block.size()) != key.n) {
    throw std::invalid_argument("shuffle_input: block has wrong channel count");
  }
  std::vector<T> out(static_cast<std::size_t>(key.m()), T{});
  for (int i = 0; i < key.m(); ++i) {
    if (key.assignment[i] != kZero) out[i] = block[key.assignment[i]];
  }
  return out;
}

/// The m x n one-hot matrix the SRAM shuffle array stores, row-major.
std::vector<std::uint8_t> one_hot_matrix(const BlockKey& key);

/// Slots where both keys route the same real channel (zero-zero excluded).
int matched_digits(const BlockKey& a, const BlockKey& b);
int matched_digits(const ShuffleKey& a, const ShuffleKey& b);

/// Keys live in their own text file, never inside a model checkpoint.
void save_keys(const std::filesystem::path& path, std::span<const ShuffleKey> keys);
std::vector<ShuffleKey> load_keys(const std::filesystem::path& path);

}  // namespace cimsec::shufflekey
