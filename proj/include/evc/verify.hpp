#pragma once

// Self-check suites behind `evc verify` and the acceptance tests. Each suite
// compares a fast path against an independent formulation and records every
// violated invariant with observed and expected values.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace evc {

struct Failure {
  std::string suite;
  std::string case_name;
  std::string invariant;
  std::string observed;
  std::string expected;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::vector<Failure> failures;
  double max_error = 0.0;
  bool gradient = false;  // max_error is a gradient error
  double seconds = 0.0;

  bool ok() const { return failures.empty(); }
};

struct EquivalenceGrid {
  int min_n = 2;
  int max_n = 9;
  int max_order = 4;
  int trials = 100;
  std::uint64_t seed = 0;
};

/// Brute-force multiset counts vs binomial(n+r-1, r), and 1 + sum_j of
/// those vs binomial(n+r, r), for n <= max_n, r <= max_order.
SuiteResult check_counting(int max_n, int max_order);

/// FPM rows equal the enumerated multiset set, every PCM variant rebuilds
/// its term ("pcm-reconstruction"), and regeneration is byte-identical.
/// `corrupt_pcm` flips one PCM entry of a private copy first.
SuiteResult check_index_structures(int max_n, int max_order, bool corrupt_pcm = false);

/// EVC vs TVC (dense embedding) vs direct monomial sums, relative <= 1e-12.
SuiteResult check_forward_equivalence(const EquivalenceGrid& grid);

/// EVC input gradient vs TVC (<= 1e-10), vs power-rule and materialised
/// scatter oracles, and both vs central differences (<= 1e-6).
SuiteResult check_backward_equivalence(const EquivalenceGrid& grid);

/// Full conv-layer gradient check over weights, biases and input (<= 1e-5).
SuiteResult check_conv_layer(std::uint64_t seed);

/// shake_combine range over random pairs and a full HLA block gradient
/// check at 2x8x8x8 (<= 1e-5).
SuiteResult check_hla(std::uint64_t seed, std::size_t shake_pairs = 100000);

/// n^j x n Jacobian route vs tvc_grad_input: exactly equal on integer-valued
/// data, <= 1e-12 on random data. Errors here and in the equivalence
/// suites are |a - b| / (1 + |b|).
SuiteResult check_jacobian(int max_n, int max_order, std::uint64_t seed);

struct VerifyOptions {
  std::uint64_t seed = 0;
  bool corrupt_pcm = false;
};

struct VerifyReport {
  std::vector<SuiteResult> suites;

  bool ok() const;
  std::size_t total_cases() const;
  double max_gradient_error() const;
};

VerifyReport run_verify(const VerifyOptions& options);

void write_verify_text(std::ostream& out, const VerifyReport& report);
/// suite,cases,failures,max_error,seconds,status
void write_verify_csv(std::ostream& out, const VerifyReport& report);

}  // namespace evc
