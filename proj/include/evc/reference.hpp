#pragma once

// Slow, direct formulations used only to check the fast paths. None of
// these touch the PCM tables unless the name says so.

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "evc/index_gen.hpp"
#include "evc/kernels.hpp"

namespace evc::reference {

using Tuple = std::vector<Index>;

/// Walks all n^r ordered tuples and keeps the non-decreasing ones.
std::set<Tuple> enumerate_multisets(int n, int r);
std::uint64_t count_multisets(int n, int r);

/// y = b + sum_j sum_k w_jk * prod(x[row_k of FPM^j]), products taken
/// straight from the FPM rows.
double monomial_forward(std::span<const double> x, const UniqueKernel& k, const IndexSet& indices);

/// dy/dx from the power rule on each FPM row: multiplicity of p times the
/// row product with one copy of x_p removed.
std::vector<double> monomial_grad_input(std::span<const double> x, const UniqueKernel& k,
                                        const IndexSet& indices);

/// Explicit n^j x n Jacobian of the Kronecker term vector x_{R_j}, row-major.
std::vector<double> kronecker_jacobian(std::span<const double> x, int j);

/// sum_j W^(j)^T J_j, the input gradient through explicit Jacobians.
std::vector<double> jacobian_grad_input(std::span<const double> x, const DenseKernel& k);

/// Materialises the n x count_terms(n, j-1) scatter matrix for each order
/// j >= 2 from the PCM tables, then multiplies it with the order-(j-1)
/// unique terms.
std::vector<double> materialized_scatter_grad_input(std::span<const double> x, const UniqueKernel& k,
                                                    const IndexSet& indices);

/// Same as materialized_scatter_grad_input's scatter matrix, exposed for tests.
std::vector<double> scatter_matrix(const UniqueKernel& k, const IndexSet& indices, int j);

}  // namespace evc::reference
