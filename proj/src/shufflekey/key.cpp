#include "cimsec/shufflekey/key.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "cimsec/rng.hpp"

namespace cimsec::shufflekey {

void BlockKey::validate() const {
  if (n < 1 || k < 0) throw std::invalid_argument("BlockKey: need n >= 1 and k >= 0");
  if (static_cast<int>(assignment.size()) != m()) throw std::invalid_argument("BlockKey: assignment length != n + k");
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  int zeros = 0;
  for (int a : assignment) {
    if (a == kZero) {
      ++zeros;
    } else if (a < 0 || a >= n) {
      throw std::invalid_argument("BlockKey: channel index out of range");
    } else if (seen[a]++) {
      throw std::invalid_argument("BlockKey: channel appears twice");
    }
  }
  if (zeros != k) throw std::invalid_argument("BlockKey: zero count != k");
}

int ShuffleKey::channels() const {
  int c = 0;
  for (const auto& b : blocks) c += b.n;
  return c;
}

void ShuffleKey::validate() const {
  if (blocks.empty()) throw std::invalid_argument("ShuffleKey: no blocks");
  for (const auto& b : blocks) {
    b.validate();
    if (b.n > kBlockSize) throw std::invalid_argument("ShuffleKey: block holds more than 128 channels");
  }
  // An empty list would program a key that permutes nothing.
  if (shuffled_bit_planes.empty()) throw std::invalid_argument("ShuffleKey: no bit plane is shuffled");
  for (int p : shuffled_bit_planes) {
    if (p < 0 || p > 15) throw std::invalid_argument("ShuffleKey: bad bit plane index");
  }
}

BlockKey gen_block_key(std::uint64_t key_seed, int n, int k) {
  if (n < 2) throw std::invalid_argument("gen_key: need N >= 2");
  if (k < 0) throw std::invalid_argument("gen_key: need k >= 0");
  BlockKey key;
  key.n = n;
  key.k = k;
  key.assignment.resize(static_cast<std::size_t>(n + k), kZero);
  std::iota(key.assignment.begin(), key.assignment.begin() + n, 0);
  CounterRng rng{key_seed, 0x5bffULL};
  shuffle_in_place(key.assignment, rng);
  return key;
}

namespace {

std::vector<int> block_sizes(int c_in) {
  if (c_in < 1) throw std::invalid_argument("gen_key: c_in must be >= 1");
  std::vector<int> sizes;
  for (int c = 0; c < c_in; c += kBlockSize) sizes.push_back(std::min(kBlockSize, c_in - c));
  return sizes;
}

}  // namespace

ShuffleKey gen_key(std::uint64_t key_seed, int layer, int c_in, int k, std::vector<int> planes) {
  ShuffleKey key;
  key.layer = layer;
  key.shuffled_bit_planes = std::move(planes);
  const auto sizes = block_sizes(c_in);
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    key.blocks.push_back(gen_block_key(derive_key({key_seed, static_cast<std::uint64_t>(b)}), sizes[b], k));
  }
  return key;
}

ShuffleKey identity_key(int layer, int c_in, std::vector<int> planes) {
  ShuffleKey key;
  key.layer = layer;
  key.shuffled_bit_planes = std::move(planes);
  for (int n : block_sizes(c_in)) {
    BlockKey b;
    b.n = n;
    b.assignment.resize(static_cast<std::size_t>(n));
    std::iota(b.assignment.begin(), b.assignment.end(), 0);
    key.blocks.push_back(std::move(b));
  }
  return key;
}

ShuffleKey key_with_matches(const ShuffleKey& real, int n, std::uint64_t seed) {
  real.validate();
  const int total = real.channels();
  if (n < 0 || n > total) throw std::invalid_argument("key_with_matches: n out of range");
  CounterRng rng{seed, 0x3a7cULL};
  for (int attempt = 0; attempt < 1000; ++attempt) {
    // Choose which real channels stay in place.
    std::vector<int> global(static_cast<std::size_t>(total));
    std::iota(global.begin(), global.end(), 0);
    shuffle_in_place(global, rng);
    std::vector<char> keep(static_cast<std::size_t>(total), 0);
    for (int i = 0; i < n; ++i) keep[global[i]] = 1;

    ShuffleKey out = real;
    bool ok = true;
    int base = 0;
    for (std::size_t b = 0; b < real.blocks.size() && ok; ++b) {
      const auto& rb = real.blocks[b];
      auto& ob = out.blocks[b];
      std::vector<int> free_slots;
      std::vector<int> movers;
      for (int s = 0; s < rb.m(); ++s) {
        const int a = rb.assignment[s];
        if (a != kZero && keep[base + a]) continue;
        free_slots.push_back(s);
        if (a != kZero) movers.push_back(a);
      }
      std::vector<int> pool = movers;
      pool.resize(free_slots.size(), kZero);
      bool placed = free_slots.empty();
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        shuffle_in_place(pool, rng);
        placed = true;
        for (std::size_t i = 0; i < free_slots.size(); ++i) {
          if (pool[i] != kZero && rb.assignment[free_slots[i]] == pool[i]) {
            placed = false;
            break;
          }
        }
      }
      if (!placed) {
        ok = false;
        break;
      }
      for (std::size_t i = 0; i < free_slots.size(); ++i) ob.assignment[free_slots[i]] = pool[i];
      base += rb.n;
    }
    if (ok) return out;
  }
  throw std::invalid_argument("key_with_matches: no key with exactly " + std::to_string(n) +
                              " matched digits exists for this geometry");
}

std::vector<std::uint8_t> one_hot_matrix(const BlockKey& key) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(key.m()) * key.n, 0);
  for (int i = 0; i < key.m(); ++i) {
    if (key.assignment[i] != kZero) m[static_cast<std::size_t>(i) * key.n + key.assignment[i]] = 1;
  }
  return m;
}

int matched_digits(const BlockKey& a, const BlockKey& b) {
  if (a.n != b.n || a.k != b.k || a.assignment.size() != b.assignment.size()) {
    throw std::invalid_argument("matched_digits: key shapes differ");
  }
  int n = 0;
  for (std::size_t i = 0; i < a.assignment.size(); ++i) {
    if (a.assignment[i] != kZero && a.assignment[i] == b.assignment[i]) ++n;
  }
  return n;
}

int matched_digits(const ShuffleKey& a, const ShuffleKey& b) {
  if (a.blocks.size() != b.blocks.size()) throw std::invalid_argument("matched_digits: block counts differ");
  int n = 0;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) n += matched_digits(a.blocks[i], b.blocks[i]);
  return n;
}

void save_keys(const std::filesystem::path& path, std::span<const ShuffleKey> keys) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write key file " + path.string());
  out << "cimsec-keys 1\n";
  for (const auto& key : keys) {
    key.validate();
    out << "layer " << key.layer << " planes " << key.shuffled_bit_planes.size();
    for (int p : key.shuffled_bit_planes) out << ' ' << p;
    out << " blocks " << key.blocks.size() << "\n";
    for (const auto& b : key.blocks) {
      out << "block " << b.n << ' ' << b.k;
      for (int a : b.assignment) out << ' ' << a;
      out << "\n";
    }
  }
}

std::vector<ShuffleKey> load_keys(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open key file " + path.string());
  std::string line;
  int lineno = 1;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(in, line) || line != "cimsec-keys 1") fail("not a version-1 key file");
  std::vector<ShuffleKey> keys;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag, planes_tag, blocks_tag;
    ShuffleKey key;
    std::size_t np = 0, nb = 0;
    if (!(ss >> tag >> key.layer >> planes_tag >> np) || tag != "layer" || planes_tag != "planes") fail("expected layer header");
    key.shuffled_bit_planes.resize(np);
    for (auto& p : key.shuffled_bit_planes) {
      if (!(ss >> p)) fail("truncated plane list");
    }
    if (!(ss >> blocks_tag >> nb) || blocks_tag != "blocks") fail("expected block count");
    for (std::size_t b = 0; b < nb; ++b) {
      if (!std::getline(in, line)) fail("missing block line");
      ++lineno;
      std::istringstream bs(line);
      BlockKey bk;
      if (!(bs >> tag >> bk.n >> bk.k) || tag != "block") fail("expected block line");
      bk.assignment.resize(static_cast<std::size_t>(bk.n + bk.k));
      for (auto& a : bk.assignment) {
        if (!(bs >> a)) fail("truncated assignment");
      }
      key.blocks.push_back(std::move(bk));
    }
    try {
      key.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    keys.push_back(std::move(key));
  }
  return keys;
}

}  // namespace cimsec::shufflekey
