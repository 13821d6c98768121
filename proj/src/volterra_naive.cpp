#include "evc/volterra_naive.hpp"

#include "evc/error.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace evc {
namespace {

void check_input(std::span<const double> x, int n) {
  if (x.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("input length " + std::to_string(x.size()) +
                                " does not match kernel length " + std::to_string(n));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

KroneckerTerms kron_terms(std::span<const double> x, int r, std::size_t element_budget) {
  const int n = static_cast<int>(x.size());
  if (n < 1) throw std::invalid_argument("kron_terms: empty input");
  if (r < 1) throw std::invalid_argument("kron_terms: order must be >= 1");
  std::size_t total = 0;
  for (int j = 1; j <= r; ++j) {
    total += dense_term_count(n, j, element_budget);
    if (total > element_budget) {
      throw ResourceLimitError("Kronecker terms up to order " + std::to_string(r) +
                               " exceed the element budget");
    }
  }
  KroneckerTerms out;
  out.terms.emplace_back(x.begin(), x.end());
  for (int j = 2; j <= r; ++j) {
    const auto& prev = out.terms.back();
    std::vector<double> next;
    next.reserve(prev.size() * x.size());
    for (double a : prev) {
      for (double b : x) next.push_back(a * b);
    }
    out.terms.push_back(std::move(next));
  }
  return out;
}

void fill_kronecker_terms(std::span<const double> x, int r, std::span<double> out) {
  const std::size_t n = x.size();
  std::copy(x.begin(), x.end(), out.begin());
  std::size_t prev_off = 0;
  std::size_t prev_len = n;
  for (int j = 2; j <= r; ++j) {
    const std::size_t off = prev_off + prev_len;
    double* dst = out.data() + off;
    for (std::size_t a = 0; a < prev_len; ++a) {
      const double pa = out[prev_off + a];
      for (std::size_t b = 0; b < n; ++b) *dst++ = pa * x[b];
    }
    prev_off = off;
    prev_len *= n;
  }
}

double tvc_forward(std::span<const double> x, const DenseKernel& k) {
  k.validate();
  check_input(x, k.n);
  const auto terms = kron_terms(x, k.order);
  double y = k.bias;
  for (int j = 1; j <= k.order; ++j) y += dot(k.order_weights(j), terms.order(j));
  return y;
}

DenseKernel tvc_grad_weights(std::span<const double> x, double upstream, int r) {
  const auto terms = kron_terms(x, r);
  DenseKernel g{static_cast<int>(x.size()), r, {}, upstream};
  for (const auto& t : terms.terms) {
    std::vector<double> w(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) w[i] = upstream * t[i];
    g.weights.push_back(std::move(w));
  }
  return g;
}

TransposedWeights::TransposedWeights(const DenseKernel& k) : n_(k.n), order_(k.order) {
  k.validate();
  const auto n = static_cast<std::size_t>(n_);
  a_.emplace_back(k.weights[0]);
  std::size_t width = 1;  // n^(j-1)
  for (int j = 2; j <= order_; ++j) {
    width *= n;
    const auto& w = k.weights[static_cast<std::size_t>(j - 1)];
    std::vector<double> a(n * width, 0.0);
    // Moving axis `axis` to the front: W[i_1..i_j] lands at row i_axis and
    // at the column formed by the remaining digits in their original order.
    std::size_t below = width;  // n^(j-axis-1) for the current axis
    for (int axis = 0; axis < j; ++axis) {
      const std::size_t above = below * n;
      for (std::size_t flat = 0; flat < w.size(); ++flat) {
        const std::size_t prefix = flat / above;
        const std::size_t digit = (flat / below) % n;
        const std::size_t suffix = flat % below;
        a[digit * width + prefix * below + suffix] += w[flat];
      }
      below /= n;
    }
    a_.push_back(std::move(a));
  }
}

void TransposedWeights::accumulate_grad_input(std::span<const double> kron, double upstream,
                                              std::span<double> out) const {
  const auto n = static_cast<std::size_t>(n_);
  for (std::size_t i = 0; i < n; ++i) out[i] += upstream * a_[0][i];
  std::size_t prev_off = 0;
  std::size_t width = n;  // length of x_{R_{j-1}}
  for (int j = 2; j <= order_; ++j) {
    const auto& a = a_[static_cast<std::size_t>(j - 1)];
    const double* terms = kron.data() + prev_off;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = a.data() + i * width;
      double acc = 0.0;
      for (std::size_t m = 0; m < width; ++m) acc += row[m] * terms[m];
      out[i] += upstream * acc;
    }
    prev_off += width;
    width *= n;
  }
}

std::vector<double> tvc_grad_input(std::span<const double> x, const DenseKernel& k,
                                   double upstream) {
  k.validate();
  check_input(x, k.n);
  std::vector<double> grad(x.size(), 0.0);
  const TransposedWeights transposed(k);
  if (k.order == 1) {
    transposed.accumulate_grad_input({}, upstream, grad);
    return grad;
  }
  const auto terms = kron_terms(x, k.order - 1);
  std::vector<double> flat;
  for (const auto& t : terms.terms) flat.insert(flat.end(), t.begin(), t.end());
  transposed.accumulate_grad_input(flat, upstream, grad);
  return grad;
}

DenseKernel embed_unique_weights(const UniqueKernel& uk,
                                 std::span<const FullPositionMatrix> fpm_set) {
  uk.validate();
  if (fpm_set.size() < static_cast<std::size_t>(uk.order)) {
    throw std::invalid_argument("embed_unique_weights: need FPMs for every order of the kernel");
  }
  DenseKernel dense = DenseKernel::zeros(uk.n, uk.order);
  dense.bias = uk.bias;
  const auto n = static_cast<std::size_t>(uk.n);
  for (int j = 1; j <= uk.order; ++j) {
    const auto& fpm = fpm_set[static_cast<std::size_t>(j - 1)];
    if (fpm.order != j || fpm.n != uk.n) {
      throw std::invalid_argument("embed_unique_weights: FPM order/n mismatch");
    }
    const auto w = uk.order_weights(j);
    auto out = dense.order_weights(j);
    for (std::size_t k = 0; k < fpm.rows.rows(); ++k) {
      std::size_t flat = 0;
      for (Index pos : fpm.rows.row(k)) flat = flat * n + pos;
      out[flat] = w[k];
    }
  }
  return dense;
}

}  // namespace evc
