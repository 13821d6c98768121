#include "evc/reference.hpp"

#include <algorithm>
#include <stdexcept>

namespace evc::reference {
namespace {

void check(std::span<const double> x, const UniqueKernel& k, const IndexSet& indices) {
  k.validate();
  if (static_cast<int>(x.size()) != k.n || indices.n() != k.n || indices.order() < k.order) {
    throw std::invalid_argument("reference: input, kernel and index set disagree on (n, order)");
  }
}

double row_product(std::span<const double> x, std::span<const Index> row) {
  double p = 1.0;
  for (Index i : row) p *= x[i];
  return p;
}

// Unique terms of order j, one product per FPM row.
std::vector<double> unique_terms(std::span<const double> x, const IndexSet& indices, int j) {
  const auto& rows = indices.fpm(j).rows;
  std::vector<double> t(rows.rows());
  for (std::size_t k = 0; k < rows.rows(); ++k) t[k] = row_product(x, rows.row(k));
  return t;
}

}  // namespace

std::set<Tuple> enumerate_multisets(int n, int r) {
  if (n < 1 || r < 1) throw std::invalid_argument("enumerate_multisets needs n, r >= 1");
  std::set<Tuple> out;
  Tuple t(static_cast<std::size_t>(r), 0);
  while (true) {
    if (std::is_sorted(t.begin(), t.end())) out.insert(t);
    std::size_t i = t.size();
    while (i > 0 && t[i - 1] == static_cast<Index>(n - 1)) t[--i] = 0;
    if (i == 0) break;
    ++t[i - 1];
  }
  return out;
}

std::uint64_t count_multisets(int n, int r) {
  if (n < 1 || r < 1) throw std::invalid_argument("count_multisets needs n, r >= 1");
  std::uint64_t count = 0;
  Tuple t(static_cast<std::size_t>(r), 0);
  while (true) {
    count += std::is_sorted(t.begin(), t.end());
    std::size_t i = t.size();
    while (i > 0 && t[i - 1] == static_cast<Index>(n - 1)) t[--i] = 0;
    if (i == 0) break;
    ++t[i - 1];
  }
  return count;
}

double monomial_forward(std::span<const double> x, const UniqueKernel& k, const IndexSet& indices) {
  check(x, k, indices);
  double y = k.bias;
  for (int j = 1; j <= k.order; ++j) {
    const auto w = k.order_weights(j);
    const auto& rows = indices.fpm(j).rows;
    for (std::size_t r = 0; r < rows.rows(); ++r) y += w[r] * row_product(x, rows.row(r));
  }
  return y;
}

std::vector<double> monomial_grad_input(std::span<const double> x, const UniqueKernel& k,
                                        const IndexSet& indices) {
  check(x, k, indices);
  std::vector<double> grad(x.size(), 0.0);
  for (int j = 1; j <= k.order; ++j) {
    const auto w = k.order_weights(j);
    const auto& rows = indices.fpm(j).rows;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      const auto row = rows.row(r);
      for (std::size_t m = 0; m < row.size(); ++m) {
        if (m > 0 && row[m] == row[m - 1]) continue;  // each distinct index once
        const auto mult = static_cast<double>(std::count(row.begin(), row.end(), row[m]));
        double rest = 1.0;
        for (std::size_t l = 0; l < row.size(); ++l) {
          if (l != m) rest *= x[row[l]];
        }
        grad[row[m]] += w[r] * mult * rest;
      }
    }
  }
  return grad;
}

std::vector<double> kronecker_jacobian(std::span<const double> x, int j) {
  if (j < 1) throw std::invalid_argument("kronecker_jacobian needs j >= 1");
  const std::size_t n = x.size();
  std::size_t rows = 1;
  for (int i = 0; i < j; ++i) rows *= n;
  std::vector<double> jac(rows * n, 0.0);
  Tuple t(static_cast<std::size_t>(j));
  for (std::size_t flat = 0; flat < rows; ++flat) {
    std::size_t rem = flat;
    for (std::size_t m = t.size(); m-- > 0;) {
      t[m] = static_cast<Index>(rem % n);
      rem /= n;
    }
    // d(prod_m x[t_m]) / dx_p = sum over factors m with t_m == p of the other factors.
    for (std::size_t m = 0; m < t.size(); ++m) {
      double rest = 1.0;
      for (std::size_t l = 0; l < t.size(); ++l) {
        if (l != m) rest *= x[t[l]];
      }
      jac[flat * n + t[m]] += rest;
    }
  }
  return jac;
}

std::vector<double> jacobian_grad_input(std::span<const double> x, const DenseKernel& k) {
  k.validate();
  if (static_cast<int>(x.size()) != k.n) throw std::invalid_argument("jacobian_grad_input: size mismatch");
  const std::size_t n = x.size();
  std::vector<double> grad(n, 0.0);
  for (int j = 1; j <= k.order; ++j) {
    const auto jac = kronecker_jacobian(x, j);
    const auto w = k.order_weights(j);
    for (std::size_t t = 0; t < w.size(); ++t) {
      for (std::size_t p = 0; p < n; ++p) grad[p] += w[t] * jac[t * n + p];
    }
  }
  return grad;
}

std::vector<double> scatter_matrix(const UniqueKernel& k, const IndexSet& indices, int j) {
  if (j < 2 || j > k.order) throw std::invalid_argument("scatter_matrix: order out of range");
  const auto n = static_cast<std::size_t>(k.n);
  const std::size_t width = indices.term_count(j - 1);
  std::vector<double> a(n * width, 0.0);
  const auto w = k.order_weights(j);
  for (const auto& v : indices.pcms(j).variants) {
    for (std::size_t r = 0; r < v.size(); ++r) a[v.position[r] * width + v.prev_row[r]] += w[r];
  }
  return a;
}

std::vector<double> materialized_scatter_grad_input(std::span<const double> x, const UniqueKernel& k,
                                                    const IndexSet& indices) {
  check(x, k, indices);
  const std::size_t n = x.size();
  const auto w1 = k.order_weights(1);
  std::vector<double> grad(w1.begin(), w1.end());
  for (int j = 2; j <= k.order; ++j) {
    const auto a = scatter_matrix(k, indices, j);
    const auto prev = unique_terms(x, indices, j - 1);
    for (std::size_t p = 0; p < n; ++p) {
      double acc = 0.0;
      for (std::size_t m = 0; m < prev.size(); ++m) acc += a[p * prev.size() + m] * prev[m];
      grad[p] += acc;
    }
  }
  return grad;
}

}  // namespace evc::reference
