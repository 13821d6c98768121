#include "evc/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "evc/error.hpp"
#include "evc/index_gen.hpp"
#include "evc/params.hpp"

namespace evc {
namespace {

void check_shape(int n, int order) {
  if (n < 1) throw std::invalid_argument("kernel input length must be >= 1");
  if (order < 1) throw std::invalid_argument("kernel order must be >= 1");
}

}  // namespace

UniqueKernel UniqueKernel::zeros(int n, int order) {
  check_shape(n, order);
  UniqueKernel k{n, order, {}, 0.0};
  for (int j = 1; j <= order; ++j) k.weights.emplace_back(count_terms(n, j), 0.0);
  return k;
}

std::size_t UniqueKernel::parameter_count() const {
  std::size_t total = 1;
  for (const auto& w : weights) total += w.size();
  return total;
}

void UniqueKernel::validate() const {
  check_shape(n, order);
  if (weights.size() != static_cast<std::size_t>(order)) {
    throw std::invalid_argument("unique kernel has " + std::to_string(weights.size()) +
                                " weight vectors for order " + std::to_string(order));
  }
  for (int j = 1; j <= order; ++j) {
    if (weights[static_cast<std::size_t>(j - 1)].size() != count_terms(n, j)) {
      throw std::invalid_argument("unique kernel order-" + std::to_string(j) +
                                  " weights have the wrong length");
    }
  }
}

std::size_t dense_term_count(int n, int j, std::size_t element_budget) {
  check_shape(n, j);
  std::size_t count = 1;
  for (int i = 0; i < j; ++i) {
    if (__builtin_mul_overflow(count, static_cast<std::size_t>(n), &count) ||
        count > element_budget) {
      throw ResourceLimitError("dense order-" + std::to_string(j) + " structure over " +
                               std::to_string(n) + " inputs exceeds the element budget of " +
                               std::to_string(element_budget));
    }
  }
  return count;
}

DenseKernel DenseKernel::zeros(int n, int order, std::size_t element_budget) {
  check_shape(n, order);
  std::size_t total = 0;
  DenseKernel k{n, order, {}, 0.0};
  for (int j = 1; j <= order; ++j) {
    const std::size_t count = dense_term_count(n, j, element_budget);
    total += count;
    if (total > element_budget) {
      throw ResourceLimitError("dense kernel of order " + std::to_string(order) +
                               " exceeds the element budget");
    }
    k.weights.emplace_back(count, 0.0);
  }
  return k;
}

void DenseKernel::validate() const {
  check_shape(n, order);
  if (weights.size() != static_cast<std::size_t>(order)) {
    throw std::invalid_argument("dense kernel weight list does not match its order");
  }
  std::size_t expected = 1;
  for (int j = 1; j <= order; ++j) {
    expected *= static_cast<std::size_t>(n);
    if (weights[static_cast<std::size_t>(j - 1)].size() != expected) {
      throw std::invalid_argument("dense kernel order-" + std::to_string(j) +
                                  " tensor must hold n^j entries");
    }
  }
}

UniqueKernel random_unique_kernel(int n, int order, std::mt19937_64& rng) {
  UniqueKernel k = UniqueKernel::zeros(n, order);
  for (int j = 1; j <= order; ++j) {
    const double scale = j == 1 ? 1.0 / std::sqrt(static_cast<double>(n))
                                : 1.0 / static_cast<double>(count_terms(n, j));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& w : k.order_weights(j)) w = dist(rng);
  }
  return k;
}

void append_kernel_refs(std::vector<ParamRef>& refs, const std::string& prefix,
                        std::vector<UniqueKernel>& values, std::vector<UniqueKernel>& grads) {
  if (values.size() != grads.size()) {
    throw std::invalid_argument("append_kernel_refs: value/gradient kernel counts differ");
  }
  for (std::size_t oc = 0; oc < values.size(); ++oc) {
    const std::string base = prefix + "[" + std::to_string(oc) + "]";
    for (int j = 1; j <= values[oc].order; ++j) {
      refs.push_back({base + ".order" + std::to_string(j), values[oc].order_weights(j),
                      grads[oc].order_weights(j)});
    }
    refs.push_back({base + ".bias", std::span<double>(&values[oc].bias, 1),
                    std::span<double>(&grads[oc].bias, 1)});
  }
}

}  // namespace evc
