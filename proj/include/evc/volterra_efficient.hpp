#pragma once

// Volterra filtering over unique terms only.
//
// Order-j terms are built from order-(j-1) terms with one gather and one
// multiply per term (driven by the PCM tables), and the input gradient is a
// fused scatter-add over all PCM variants, so neither the n^j Kronecker
// vectors nor the n x terms scatter matrix is ever formed.

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "evc/index_gen.hpp"
#include "evc/kernels.hpp"
#include "evc/tensor.hpp"

namespace evc {

/// Unique terms of orders 1..r stored back to back; order(j) is aligned
/// row-for-row with FPM^j.
class TermCache {
 public:
  explicit TermCache(const IndexSet& indices);

  int max_order() const { return static_cast<int>(offsets_.size()) - 1; }
  std::span<const double> order(int j) const;
  std::span<const double> all() const { return values_; }
  std::span<double> all() { return values_; }

 private:
  std::vector<double> values_;
  std::vector<std::size_t> offsets_;
};

namespace detail {

/// Writes the concatenated unique terms of x into `out` (indices.total_terms()
/// values), peeling factors with PCM variant `variant` at every order.
void fill_unique_terms(std::span<const double> x, const IndexSet& indices, std::span<double> out,
                       std::size_t variant = 0);

/// out[p] += d(sum_k dterms[k] * terms[k]) / dx_p, treating each term as the
/// monomial it names. Accumulates in ascending term row, then variant.
void scatter_term_gradients(std::span<const double> terms, std::span<const double> dterms,
                            const IndexSet& indices, std::span<double> out);

double dot_terms(const UniqueKernel& k, std::span<const double> terms);

}  // namespace detail

TermCache build_terms_progressive(std::span<const double> x, const IndexSet& indices,
                                  std::size_t variant = 0);

double evc_forward(std::span<const double> x, const UniqueKernel& k, const IndexSet& indices);
double evc_forward(const TermCache& cache, const UniqueKernel& k);

/// upstream * x_{S_j} per order; bias gradient = upstream.
UniqueKernel evc_grad_weights(const TermCache& cache, double upstream);

std::vector<double> evc_grad_input(const TermCache& cache, const UniqueKernel& k,
                                   const IndexSet& indices, double upstream);

/// Volterra filter applied to every im2col patch; n = c * kh * kw.
struct VolterraConvLayer {
  ConvGeometry geometry;
  int out_channels = 0;
  int order = 0;
  std::vector<UniqueKernel> kernels;  // one per output channel
  std::shared_ptr<const IndexSet> indices;

  int n() const { return geometry.patch_len(); }
  void validate() const;
};

VolterraConvLayer make_volterra_conv(const ConvGeometry& geometry, int out_channels, int order,
                                     std::mt19937_64& rng);
VolterraConvLayer zero_volterra_conv(const ConvGeometry& geometry, int out_channels, int order);

struct ConvOptions {
  /// Keep per-patch terms for backward; otherwise backward recomputes them.
  bool retain_terms = true;
};

struct ConvSaved {
  PatchMatrix patches;
  std::size_t batch = 0;
  std::size_t total_terms = 0;
  std::vector<double> terms;  // n_patches x total_terms when retained

  bool has_terms() const { return !terms.empty(); }
  std::span<const double> patch_terms(std::size_t p) const {
    return {terms.data() + p * total_terms, total_terms};
  }
};

struct ConvForward {
  Tensor output;  // [batch, out_channels, out_h, out_w]
  ConvSaved saved;
};

struct ConvGradients {
  Tensor input;
  std::vector<UniqueKernel> kernels;  // bias field holds the bias gradient
};

ConvForward conv2d_forward(const Tensor& input, const VolterraConvLayer& layer,
                           const ConvOptions& options = {});
ConvGradients conv2d_backward(const Tensor& upstream, const ConvSaved& saved,
                              const VolterraConvLayer& layer);

}  // namespace evc
