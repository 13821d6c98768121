#include "evc/volterra_efficient.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "evc/error.hpp"

namespace evc {
namespace {

void check_input(std::span<const double> x, const IndexSet& indices) {
  if (x.size() != static_cast<std::size_t>(indices.n())) {
    throw std::invalid_argument("input length " + std::to_string(x.size()) +
                                " does not match index tables built for n = " +
                                std::to_string(indices.n()));
  }
}

void check_kernel(const UniqueKernel& k, const IndexSet& indices) {
  k.validate();
  if (k.n != indices.n() || k.order > indices.order()) {
    throw std::invalid_argument("kernel (n = " + std::to_string(k.n) + ", order " +
                                std::to_string(k.order) + ") does not match index tables");
  }
}

void check_pcm_bounds(const IndexSet& indices) {
  for (int j = 2; j <= indices.order(); ++j) {
    const auto prev_count = indices.term_count(j - 1);
    for (const auto& v : indices.pcms(j).variants) {
      if (v.size() != indices.term_count(j)) {
        throw InternalError("order-" + std::to_string(j) + " PCM has the wrong row count");
      }
      for (std::size_t k = 0; k < v.size(); ++k) {
        if (v.position[k] >= static_cast<Index>(indices.n()) || v.prev_row[k] >= prev_count) {
          throw InternalError("order-" + std::to_string(j) + " PCM row " + std::to_string(k) +
                              " points outside the input or the lower-order terms");
        }
      }
    }
  }
}

}  // namespace

TermCache::TermCache(const IndexSet& indices) : values_(indices.total_terms(), 0.0) {
  for (int j = 1; j <= indices.order(); ++j) offsets_.push_back(indices.term_offset(j));
  offsets_.push_back(indices.total_terms());
}

std::span<const double> TermCache::order(int j) const {
  if (j < 1 || j > max_order()) throw std::out_of_range("term order out of range");
  const auto begin = offsets_[static_cast<std::size_t>(j - 1)];
  return {values_.data() + begin, offsets_[static_cast<std::size_t>(j)] - begin};
}

namespace detail {

void fill_unique_terms(std::span<const double> x, const IndexSet& indices, std::span<double> out,
                       std::size_t variant) {
  std::copy(x.begin(), x.end(), out.begin());
  for (int j = 2; j <= indices.order(); ++j) {
    const auto& pcms = indices.pcms(j);
    const auto& table = pcms.variants[std::min(variant, pcms.variants.size() - 1)];
    const double* prev = out.data() + indices.term_offset(j - 1);
    double* cur = out.data() + indices.term_offset(j);
    const Index* pos = table.position.data();
    const Index* row = table.prev_row.data();
    const std::size_t count = table.size();
    for (std::size_t k = 0; k < count; ++k) cur[k] = x[pos[k]] * prev[row[k]];
  }
}

void scatter_term_gradients(std::span<const double> terms, std::span<const double> dterms,
                            const IndexSet& indices, std::span<double> out) {
  const auto n = static_cast<std::size_t>(indices.n());
  for (std::size_t p = 0; p < n; ++p) out[p] += dterms[p];
  for (int j = 2; j <= indices.order(); ++j) {
    const auto& variants = indices.pcms(j).variants;
    const double* prev = terms.data() + indices.term_offset(j - 1);
    const double* grad = dterms.data() + indices.term_offset(j);
    const std::size_t count = indices.term_count(j);
    for (std::size_t k = 0; k < count; ++k) {
      const double g = grad[k];
      if (g == 0.0) continue;
      for (const auto& v : variants) out[v.position[k]] += g * prev[v.prev_row[k]];
    }
  }
}

double dot_terms(const UniqueKernel& k, std::span<const double> terms) {
  double y = k.bias;
  const double* t = terms.data();
  for (const auto& w : k.weights) {
    y += std::inner_product(w.begin(), w.end(), t, 0.0);
    t += w.size();
  }
  return y;
}

}  // namespace detail

TermCache build_terms_progressive(std::span<const double> x, const IndexSet& indices,
                                  std::size_t variant) {
  check_input(x, indices);
  check_pcm_bounds(indices);
  TermCache cache(indices);
  detail::fill_unique_terms(x, indices, cache.all(), variant);
  return cache;
}

double evc_forward(std::span<const double> x, const UniqueKernel& k, const IndexSet& indices) {
  check_kernel(k, indices);
  return evc_forward(build_terms_progressive(x, indices), k);
}

double evc_forward(const TermCache& cache, const UniqueKernel& k) {
  k.validate();
  if (cache.max_order() < k.order || cache.order(1).size() != static_cast<std::size_t>(k.n)) {
    throw std::invalid_argument("term cache does not match kernel");
  }
  return detail::dot_terms(k, cache.all());
}

UniqueKernel evc_grad_weights(const TermCache& cache, double upstream) {
  UniqueKernel g;
  g.n = static_cast<int>(cache.order(1).size());
  g.order = cache.max_order();
  g.bias = upstream;
  for (int j = 1; j <= g.order; ++j) {
    const auto t = cache.order(j);
    std::vector<double> w(t.size());
    std::transform(t.begin(), t.end(), w.begin(), [upstream](double v) { return upstream * v; });
    g.weights.push_back(std::move(w));
  }
  return g;
}

std::vector<double> evc_grad_input(const TermCache& cache, const UniqueKernel& k,
                                   const IndexSet& indices, double upstream) {
  check_kernel(k, indices);
  if (cache.all().size() != indices.total_terms()) {
    throw std::invalid_argument("term cache was not built from these index tables");
  }
  std::vector<double> dterms(indices.total_terms(), 0.0);
  for (int j = 1; j <= k.order; ++j) {
    const auto w = k.order_weights(j);
    std::transform(w.begin(), w.end(), dterms.begin() + static_cast<std::ptrdiff_t>(indices.term_offset(j)),
                   [upstream](double v) { return upstream * v; });
  }
  std::vector<double> grad(static_cast<std::size_t>(k.n), 0.0);
  detail::scatter_term_gradients(cache.all(), dterms, indices, grad);
  return grad;
}

void VolterraConvLayer::validate() const {
  geometry.validate();
  if (out_channels < 1) throw std::invalid_argument("conv layer needs >= 1 output channel");
  if (!indices || indices->n() != n() || indices->order() != order) {
    throw std::invalid_argument("conv layer index tables do not match its geometry/order");
  }
  if (kernels.size() != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("conv layer needs one kernel per output channel");
  }
  for (const auto& k : kernels) {
    k.validate();
    if (k.n != n() || k.order != order) {
      throw std::invalid_argument("conv layer kernels must share (n, order)");
    }
  }
}

VolterraConvLayer zero_volterra_conv(const ConvGeometry& geometry, int out_channels, int order) {
  geometry.validate();
  VolterraConvLayer layer{geometry, out_channels, order, {}, nullptr};
  layer.indices = cached_index_set(geometry.patch_len(), order);
  for (int oc = 0; oc < out_channels; ++oc) {
    layer.kernels.push_back(UniqueKernel::zeros(geometry.patch_len(), order));
  }
  layer.validate();
  return layer;
}

VolterraConvLayer make_volterra_conv(const ConvGeometry& geometry, int out_channels, int order,
                                     std::mt19937_64& rng) {
  VolterraConvLayer layer = zero_volterra_conv(geometry, out_channels, order);
  for (auto& k : layer.kernels) k = random_unique_kernel(layer.n(), order, rng);
  return layer;
}

namespace {

// Patches processed per GEMM; bounds scratch memory when terms are not retained.
constexpr std::size_t kPatchBlock = 256;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// out_channels x T, each row the concatenated per-order weights of one kernel.
RowMatrix stacked_weights(const VolterraConvLayer& layer, std::size_t T) {
  RowMatrix w(layer.out_channels, static_cast<Eigen::Index>(T));
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    double* dst = w.row(oc).data();
    for (const auto& part : layer.kernels[static_cast<std::size_t>(oc)].weights) {
      dst = std::copy(part.begin(), part.end(), dst);
    }
  }
  return w;
}

}  // namespace

ConvForward conv2d_forward(const Tensor& input, const VolterraConvLayer& layer,
                           const ConvOptions& options) {
  layer.validate();
  const IndexSet& indices = *layer.indices;
  ConvForward result;
  result.saved.patches = im2col(input, layer.geometry);
  result.saved.batch = input.dim(0);
  result.saved.total_terms = indices.total_terms();

  const auto& patches = result.saved.patches;
  const auto oc_count = static_cast<std::size_t>(layer.out_channels);
  const auto spatial = static_cast<std::size_t>(layer.geometry.out_h() * layer.geometry.out_w());
  result.output = Tensor({result.saved.batch, oc_count,
                          static_cast<std::size_t>(layer.geometry.out_h()),
                          static_cast<std::size_t>(layer.geometry.out_w())});

  const std::size_t T = indices.total_terms();
  const RowMatrix weights = stacked_weights(layer, T);
  std::vector<double> scratch;
  if (options.retain_terms) {
    result.saved.terms.assign(patches.n_patches * T, 0.0);
  } else {
    scratch.assign(std::min(kPatchBlock, patches.n_patches) * T, 0.0);
  }
  auto out = result.output.data();
  RowMatrix block_out;
  for (std::size_t start = 0; start < patches.n_patches; start += kPatchBlock) {
    const std::size_t rows = std::min(kPatchBlock, patches.n_patches - start);
    double* terms = options.retain_terms ? result.saved.terms.data() + start * T : scratch.data();
    for (std::size_t i = 0; i < rows; ++i) {
      detail::fill_unique_terms(patches.row(start + i), indices, {terms + i * T, T});
    }
    // Terms are shared by every output channel: one GEMM per block.
    const Eigen::Map<const RowMatrix> term_block(terms, static_cast<Eigen::Index>(rows),
                                                 static_cast<Eigen::Index>(T));
    block_out.noalias() = term_block * weights.transpose();
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t p = start + i;
      const std::size_t b = p / spatial;
      const std::size_t s = p % spatial;
      for (std::size_t oc = 0; oc < oc_count; ++oc) {
        out[(b * oc_count + oc) * spatial + s] =
            layer.kernels[oc].bias + block_out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(oc));
      }
    }
  }
  return result;
}

ConvGradients conv2d_backward(const Tensor& upstream, const ConvSaved& saved,
                              const VolterraConvLayer& layer) {
  layer.validate();
  const IndexSet& indices = *layer.indices;
  const auto oc_count = static_cast<std::size_t>(layer.out_channels);
  const auto spatial = static_cast<std::size_t>(layer.geometry.out_h() * layer.geometry.out_w());
  const std::size_t T = indices.total_terms();
  if (!(saved.patches.geometry == layer.geometry) || saved.total_terms != T ||
      saved.patches.n_patches != saved.batch * spatial ||
      (saved.has_terms() && saved.terms.size() != saved.patches.n_patches * T)) {
    throw std::invalid_argument("conv2d_backward: saved state does not match this layer");
  }
  if (upstream.rank() != 4 || upstream.dim(0) != saved.batch || upstream.dim(1) != oc_count ||
      upstream.dim(2) != static_cast<std::size_t>(layer.geometry.out_h()) ||
      upstream.dim(3) != static_cast<std::size_t>(layer.geometry.out_w())) {
    throw std::invalid_argument("conv2d_backward: upstream " + upstream.shape_string() +
                                " does not match the layer output");
  }

  ConvGradients grads;
  for (std::size_t oc = 0; oc < oc_count; ++oc) {
    grads.kernels.push_back(UniqueKernel::zeros(layer.n(), layer.order));
  }
  const RowMatrix weights = stacked_weights(layer, T);
  RowMatrix weight_grads = RowMatrix::Zero(static_cast<Eigen::Index>(oc_count), static_cast<Eigen::Index>(T));

  PatchMatrix patch_grads;
  patch_grads.geometry = layer.geometry;
  patch_grads.n_patches = saved.patches.n_patches;
  patch_grads.patch_len = saved.patches.patch_len;
  patch_grads.data.assign(patch_grads.n_patches * patch_grads.patch_len, 0.0);

  const std::size_t block = std::min(kPatchBlock, saved.patches.n_patches);
  std::vector<double> scratch(saved.has_terms() ? 0 : block * T);
  RowMatrix up_block(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(oc_count));
  RowMatrix dterms;
  const auto up = upstream.data();
  for (std::size_t start = 0; start < saved.patches.n_patches; start += kPatchBlock) {
    const std::size_t rows = std::min(kPatchBlock, saved.patches.n_patches - start);
    const double* terms = saved.has_terms() ? saved.terms.data() + start * T : scratch.data();
    if (!saved.has_terms()) {
      for (std::size_t i = 0; i < rows; ++i) {
        detail::fill_unique_terms(saved.patches.row(start + i), indices, {scratch.data() + i * T, T});
      }
    }
    up_block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(oc_count));
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t p = start + i;
      const std::size_t b = p / spatial;
      const std::size_t s = p % spatial;
      for (std::size_t oc = 0; oc < oc_count; ++oc) {
        const double g = up[(b * oc_count + oc) * spatial + s];
        up_block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(oc)) = g;
        grads.kernels[oc].bias += g;
      }
    }
    const Eigen::Map<const RowMatrix> term_block(terms, static_cast<Eigen::Index>(rows),
                                                 static_cast<Eigen::Index>(T));
    weight_grads.noalias() += up_block.transpose() * term_block;
    dterms.noalias() = up_block * weights;
    for (std::size_t i = 0; i < rows; ++i) {
      detail::scatter_term_gradients({terms + i * T, T}, {dterms.row(static_cast<Eigen::Index>(i)).data(), T},
                                     indices, patch_grads.row(start + i));
    }
  }

  for (std::size_t oc = 0; oc < oc_count; ++oc) {
    const double* src = weight_grads.row(static_cast<Eigen::Index>(oc)).data();
    for (auto& w : grads.kernels[oc].weights) {
      std::copy(src, src + w.size(), w.begin());
      src += w.size();
    }
  }
  grads.input = col2im_accumulate(patch_grads, layer.geometry, saved.batch);
  return grads;
}

}  // namespace evc
