#pragma once

#include <cstdint>
#include <vector>

namespace cimsec::shufflekey {

/// [C(N,n) (N-n)!] / N!, evaluated in log space (equals 1/n!).
double bound_no_insert(int N, int n);

/// [C(N,n) (M-n)! / k!] / [C(M,k) N!] in log space, without clamping.
double bound_with_insert_raw(int N, int M, int k, int n);

/// bound_with_insert_raw clamped to [0, 1].
double bound_with_insert(int N, int M, int k, int n);

/// P(exactly n fixed points) of a uniform permutation of N, by listing all N!
/// permutations. Limited to N <= 10.
std::vector<double> enumerate_match_distribution(int N);

/// Same distribution from rencontres numbers: (1/n!) sum_{i<=N-n} (-1)^i / i!.
std::vector<double> rencontres_distribution(int N);

/// Enumeration for N <= 10, rencontres formula above.
std::vector<double> exact_match_distribution(int N);

struct MatchTally {
  int N = 0;
  int k = 0;
  std::uint64_t trials = 0;
  std::vector<std::uint64_t> counts;  // index n = matched digits

  double frequency(int n) const;
  double frequency_at_least(int n) const;
};

/// Draws `trials` random keys and tallies matched digits against one fixed
/// real key (both with n = N real channels and k zeros).
MatchTally monte_carlo_match(int N, int k, std::uint64_t trials, std::uint64_t seed);

}  // namespace cimsec::shufflekey
