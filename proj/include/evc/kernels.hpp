#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace evc {

/// Default cap on elements a dense (Kronecker-ordered) structure may hold.
inline constexpr std::size_t kDefaultElementBudget = 100'000'000;

/// Weights over unique terms: weights[j-1] is aligned row-for-row with FPM^j
/// and has binomial(n + j - 1, j) entries.
struct UniqueKernel {
  int n = 0;
  int order = 0;
  std::vector<std::vector<double>> weights;
  double bias = 0.0;

  static UniqueKernel zeros(int n, int order);

  std::span<const double> order_weights(int j) const {
    return weights.at(static_cast<std::size_t>(j - 1));
  }
  std::span<double> order_weights(int j) { return weights.at(static_cast<std::size_t>(j - 1)); }

  /// Weight count plus one for the bias.
  std::size_t parameter_count() const;

  /// Throws std::invalid_argument if the per-order lengths are inconsistent.
  void validate() const;
};

/// Full weight tensors: weights[j-1] holds the n^j entries of W^(j) in
/// row-major order, which is also the Kronecker order of the term vector.
struct DenseKernel {
  int n = 0;
  int order = 0;
  std::vector<std::vector<double>> weights;
  double bias = 0.0;

  /// Throws ResourceLimitError if sum of n^j exceeds `element_budget`.
  static DenseKernel zeros(int n, int order, std::size_t element_budget = kDefaultElementBudget);

  std::span<const double> order_weights(int j) const {
    return weights.at(static_cast<std::size_t>(j - 1));
  }
  std::span<double> order_weights(int j) { return weights.at(static_cast<std::size_t>(j - 1)); }

  void validate() const;
};

/// n^j with overflow and budget checks; throws ResourceLimitError.
std::size_t dense_term_count(int n, int j, std::size_t element_budget = kDefaultElementBudget);

/// First order ~ U(-1/sqrt(n), 1/sqrt(n)); order j >= 2 ~ U(-1/c_j, 1/c_j)
/// with c_j = binomial(n + j - 1, j), so fresh filters start close to linear.
UniqueKernel random_unique_kernel(int n, int order, std::mt19937_64& rng);

}  // namespace evc
