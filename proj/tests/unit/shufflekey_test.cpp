#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "cimsec/rng.hpp"
#include "cimsec/shufflekey/bounds.hpp"
#include "cimsec/shufflekey/key.hpp"

namespace sk = cimsec::shufflekey;
namespace fs = std::filesystem;

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double choose(int n, int r) { return factorial(n) / (factorial(r) * factorial(n - r)); }

// Fixed points of every permutation, counted with std::next_permutation.
std::vector<double> brute_force_fixed_points(int N) {
  std::vector<int> p(static_cast<std::size_t>(N));
  std::iota(p.begin(), p.end(), 0);
  std::vector<double> counts(static_cast<std::size_t>(N) + 1, 0.0);
  do {
    int fixed = 0;
    for (int i = 0; i < N; ++i) fixed += p[i] == i;
    counts[fixed] += 1.0;
  } while (std::next_permutation(p.begin(), p.end()));
  for (auto& c : counts) c /= factorial(N);
  return counts;
}

}  // namespace

TEST(Bounds, NoInsertEqualsInverseFactorial) {
  for (int n = 0; n <= 20; ++n) {
    const double expect = 1.0 / std::tgamma(n + 1.0);
    EXPECT_LE(std::abs(sk::bound_no_insert(128, n) - expect) / expect, 1e-12) << n;
  }
}

TEST(Bounds, WithInsertMatchesDirectProducts) {
  for (int N : {6, 8, 10}) {
    for (int k : {0, 1, 3}) {
      const int M = N + k;
      for (int n = 0; n <= N; ++n) {
        const double direct = choose(N, n) * factorial(M - n) / factorial(k) / (choose(M, k) * factorial(N));
        EXPECT_NEAR(sk::bound_with_insert_raw(N, M, k, n), direct, 1e-12 * std::max(1.0, direct));
        EXPECT_LE(sk::bound_with_insert(N, M, k, n), 1.0);
      }
    }
  }
  EXPECT_DOUBLE_EQ(sk::bound_with_insert(8, 8, 0, 3), sk::bound_no_insert(8, 3));
}

TEST(Bounds, EnumerationEqualsRencontres) {
  for (int N = 1; N <= 7; ++N) {
    const auto brute = brute_force_fixed_points(N);
    const auto enumerated = sk::enumerate_match_distribution(N);
    const auto formula = sk::rencontres_distribution(N);
    ASSERT_EQ(enumerated.size(), brute.size());
    for (std::size_t n = 0; n < brute.size(); ++n) {
      EXPECT_EQ(enumerated[n], brute[n]) << "N " << N << " n " << n;
      EXPECT_NEAR(formula[n], brute[n], 1e-15) << "N " << N << " n " << n;
    }
  }
}

TEST(Bounds, MonteCarloAgreesWithExactDistribution) {
  const int N = 5;
  const std::uint64_t trials = 100000;
  const auto tally = sk::monte_carlo_match(N, 0, trials, 3);
  const auto exact = sk::exact_match_distribution(N);
  for (int n = 0; n <= N; ++n) {
    const double sd = std::sqrt(exact[n] * (1 - exact[n]) / trials);
    EXPECT_NEAR(tally.frequency(n), exact[n], 4 * sd + 1e-12) << n;
  }
  EXPECT_NEAR(tally.frequency_at_least(0), 1.0, 1e-12);
}

TEST(Keys, FourChannelPermutationsAreUniform) {
  // Chi-square over the 24 permutations; 23 degrees of freedom, 0.1% critical value 49.73.
  std::map<std::vector<int>, int> seen;
  const int draws = 24000;
  for (int i = 0; i < draws; ++i) {
    seen[sk::gen_block_key(cimsec::derive_key({0xc41ULL, static_cast<std::uint64_t>(i)}), 4, 0).assignment]++;
  }
  ASSERT_EQ(seen.size(), 24u);
  double chi2 = 0.0;
  for (const auto& [perm, count] : seen) chi2 += std::pow(count - 1000.0, 2) / 1000.0;
  EXPECT_LT(chi2, 49.73);
}

TEST(Keys, ZeroInsertionGeometry) {
  const auto key = sk::gen_key(9, 2, 300, 5, {3});
  key.validate();
  ASSERT_EQ(key.blocks.size(), 3u);
  EXPECT_EQ(key.blocks[0].n, 128);
  EXPECT_EQ(key.blocks[2].n, 44);
  EXPECT_EQ(key.channels(), 300);
  for (const auto& b : key.blocks) {
    EXPECT_EQ(b.m(), b.n + 5);
    EXPECT_EQ(std::count(b.assignment.begin(), b.assignment.end(), sk::kZero), 5);
    std::vector<int> real;
    for (int a : b.assignment) {
      if (a != sk::kZero) real.push_back(a);
    }
    std::sort(real.begin(), real.end());
    for (int i = 0; i < b.n; ++i) ASSERT_EQ(real[i], i);
  }
  EXPECT_THROW(sk::gen_block_key(1, 1, 0), std::invalid_argument);
}

TEST(Keys, OneHotTimesInputIsTheShuffle) {
  const auto key = sk::gen_block_key(17, 6, 3);
  const auto mat = sk::one_hot_matrix(key);
  ASSERT_EQ(mat.size(), static_cast<std::size_t>(key.m() * key.n));
  std::vector<int> in{11, 22, 33, 44, 55, 66};
  std::vector<int> product(static_cast<std::size_t>(key.m()), 0);
  for (int r = 0; r < key.m(); ++r) {
    for (int c = 0; c < key.n; ++c) product[r] += mat[r * key.n + c] * in[c];
  }
  EXPECT_EQ(product, sk::shuffle_input<int>(in, key));
  for (int c = 0; c < key.n; ++c) {
    int ones = 0;
    for (int r = 0; r < key.m(); ++r) ones += mat[r * key.n + c];
    EXPECT_EQ(ones, 1);
  }
}

TEST(Keys, MatchedDigitsAreExact) {
  const auto real = sk::gen_key(5, 1, 40, 4, {0, 1});
  for (int n : {0, 1, 7, 39, 40}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto guess = sk::key_with_matches(real, n, s);
      guess.validate();
      EXPECT_EQ(sk::matched_digits(guess, real), n) << n;
    }
  }
  EXPECT_EQ(sk::matched_digits(real, real), 40);
  EXPECT_ANY_THROW(sk::key_with_matches(real, 41, 1));
}

TEST(Keys, IdentityLeavesOrder) {
  const auto id = sk::identity_key(0, 5, {});
  const std::vector<double> in{1, 2, 3, 4, 5};
  EXPECT_EQ(sk::shuffle_input<double>(in, id.blocks[0]), in);
}

TEST(KeyFile, RoundTripAndErrors) {
  const auto dir = fs::temp_directory_path() / ("cimsec_keys_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const std::vector<sk::ShuffleKey> keys{sk::gen_key(1, 1, 16, 0, {0}), sk::gen_key(2, 3, 130, 2, {7, 6})};
  sk::save_keys(dir / "k.txt", keys);
  EXPECT_EQ(sk::load_keys(dir / "k.txt"), keys);

  std::ofstream(dir / "bad.txt") << "cimsec-keys 1\nlayer x\n";
  EXPECT_ANY_THROW(sk::load_keys(dir / "bad.txt"));
  std::ofstream(dir / "other.txt") << "not a key file\n";
  EXPECT_ANY_THROW(sk::load_keys(dir / "other.txt"));
  EXPECT_ANY_THROW(sk::load_keys(dir / "missing.txt"));
  fs::remove_all(dir);
}

TEST(Keys, MustShuffleSomePlane) {
  EXPECT_THROW(sk::gen_key(1, 1, 16, 0, {}).validate(), std::invalid_argument);
}

TEST(KeyFile, RejectsBrokenPermutation) {
  sk::BlockKey b;
  b.n = 3;
  b.assignment = {0, 0, 2};
  EXPECT_THROW(b.validate(), std::invalid_argument);
}
