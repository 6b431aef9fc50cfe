#include "cimsec/shufflekey/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cimsec/rng.hpp"
#include "cimsec/shufflekey/key.hpp"

namespace cimsec::shufflekey {

namespace {

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

double log_choose(int n, int r) { return log_factorial(n) - log_factorial(r) - log_factorial(n - r); }

}  // namespace

double bound_no_insert(int N, int n) {
  if (N < 1 || n < 0 || n > N) throw std::invalid_argument("bound_no_insert: need 0 <= n <= N");
  return std::exp(log_choose(N, n) + log_factorial(N - n) - log_factorial(N));
}

double bound_with_insert_raw(int N, int M, int k, int n) {
  if (N < 1 || k < 0 || M != N + k) throw std::invalid_argument("bound_with_insert: need M = N + k");
  if (n < 0 || n > N) throw std::invalid_argument("bound_with_insert: need 0 <= n <= N");
  const double log_num = log_choose(N, n) + log_factorial(M - n) - log_factorial(k);
  const double log_den = log_choose(M, k) + log_factorial(N);
  return std::exp(log_num - log_den);
}

double bound_with_insert(int N, int M, int k, int n) {
  return std::clamp(bound_with_insert_raw(N, M, k, n), 0.0, 1.0);
}

std::vector<double> enumerate_match_distribution(int N) {
  if (N < 1 || N > 10) throw std::invalid_argument("enumerate_match_distribution: N must be in 1..10");
  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(N) + 1, 0);
  std::uint64_t total = 0;
  do {
    int fixed = 0;
    for (int i = 0; i < N; ++i) fixed += perm[i] == i ? 1 : 0;
    ++counts[fixed];
    ++total;
  } while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<double> p(counts.size());
  for (std::size_t n = 0; n < counts.size(); ++n) p[n] = static_cast<double>(counts[n]) / static_cast<double>(total);
  return p;
}

std::vector<double> rencontres_distribution(int N) {
  if (N < 1) throw std::invalid_argument("rencontres_distribution: N must be >= 1");
  // D(m)/m! = sum_{i=0}^{m} (-1)^i / i!
  std::vector<double> derange_ratio(static_cast<std::size_t>(N) + 1);
  double term = 1.0;
  double sum = 0.0;
  for (int i = 0; i <= N; ++i) {
    if (i > 0) term /= -static_cast<double>(i);
    sum += term;
    derange_ratio[i] = sum;
  }
  std::vector<double> p(static_cast<std::size_t>(N) + 1);
  for (int n = 0; n <= N; ++n) p[n] = derange_ratio[N - n] * std::exp(-log_factorial(n));
  return p;
}

std::vector<double> exact_match_distribution(int N) {
  return N <= 10 ? enumerate_match_distribution(N) : rencontres_distribution(N);
}

double MatchTally::frequency(int n) const {
  if (trials == 0 || n < 0 || n >= static_cast<int>(counts.size())) return 0.0;
  return static_cast<double>(counts[n]) / static_cast<double>(trials);
}

double MatchTally::frequency_at_least(int n) const {
  if (trials == 0) return 0.0;
  std::uint64_t c = 0;
  for (std::size_t i = static_cast<std::size_t>(std::max(n, 0)); i < counts.size(); ++i) c += counts[i];
  return static_cast<double>(c) / static_cast<double>(trials);
}

MatchTally monte_carlo_match(int N, int k, std::uint64_t trials, std::uint64_t seed) {
  MatchTally tally;
  tally.N = N;
  tally.k = k;
  tally.trials = trials;
  tally.counts.assign(static_cast<std::size_t>(N) + 1, 0);
  const BlockKey real = gen_block_key(derive_key({seed, 0x4ea1ULL}), N, k);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const BlockKey guess = gen_block_key(derive_key({seed, 0x6e55ULL, t}), N, k);
    ++tally.counts[matched_digits(real, guess)];
  }
  return tally;
}

}  // namespace cimsec::shufflekey
