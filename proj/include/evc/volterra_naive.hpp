#pragma once

// Volterra filtering over the full Kronecker-ordered term vectors. This is
// the reference the unique-term implementation is checked against, and the
// baseline it is benchmarked against; it is not meant to be fast.

#include <span>
#include <vector>

#include "evc/index_gen.hpp"
#include "evc/kernels.hpp"

namespace evc {

/// terms[j-1] = x ⊗ x ⊗ ... ⊗ x (j factors); leftmost index varies slowest.
struct KroneckerTerms {
  std::vector<std::vector<double>> terms;

  std::span<const double> order(int j) const { return terms.at(static_cast<std::size_t>(j - 1)); }
};

KroneckerTerms kron_terms(std::span<const double> x, int r,
                          std::size_t element_budget = kDefaultElementBudget);

/// Writes all orders 1..r back to back into `out`, which must hold
/// sum_j n^j values.
void fill_kronecker_terms(std::span<const double> x, int r, std::span<double> out);

double tvc_forward(std::span<const double> x, const DenseKernel& k);

/// upstream * x_{R_j} for each order, bias gradient = upstream.
DenseKernel tvc_grad_weights(std::span<const double> x, double upstream, int r);

/// Input gradient via summed axis-permuted weight tensors; never forms the
/// n^j x n Jacobian.
std::vector<double> tvc_grad_input(std::span<const double> x, const DenseKernel& k,
                                   double upstream);

/// The summed transposes a_j of a dense kernel, reshaped n x n^(j-1). They
/// depend only on the weights, so a layer builds them once per kernel.
class TransposedWeights {
 public:
  explicit TransposedWeights(const DenseKernel& k);

  int n() const { return n_; }
  int order() const { return order_; }
  std::span<const double> summed(int j) const { return a_.at(static_cast<std::size_t>(j - 1)); }

  /// out += upstream * (a_1 + sum_{j>=2} a_j x_{R_{j-1}}). `kron` holds the
  /// concatenated Kronecker terms of orders 1..order-1 (or more).
  void accumulate_grad_input(std::span<const double> kron, double upstream,
                             std::span<double> out) const;

 private:
  int n_;
  int order_;
  std::vector<std::vector<double>> a_;
};

/// Places each unique weight at the tensor position of its non-decreasing
/// index tuple; every other permutation of that tuple stays zero.
DenseKernel embed_unique_weights(const UniqueKernel& uk,
                                 std::span<const FullPositionMatrix> fpm_set);

}  // namespace evc
