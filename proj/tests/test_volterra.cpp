#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "evc/error.hpp"
#include "evc/grad_check.hpp"
#include "evc/kernel_io.hpp"
#include "evc/reference.hpp"
#include "evc/volterra_efficient.hpp"
#include "evc/volterra_naive.hpp"

namespace evc {
namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

UniqueKernel random_kernel(int n, int r, std::mt19937_64& rng) {
  auto k = UniqueKernel::zeros(n, r);
  for (auto& w : k.weights) w = random_vector(w.size(), rng);
  k.bias = random_vector(1, rng)[0];
  return k;
}

DenseKernel dense_ones(int n, int r) {
  auto k = DenseKernel::zeros(n, r);
  for (auto& w : k.weights) std::fill(w.begin(), w.end(), 1.0);
  return k;
}

// --- Kronecker (dense) route -------------------------------------------------

TEST(Kronecker, TermsOfSmallVectors) {
  const std::vector<double> x{1, 2};
  EXPECT_EQ(kron_terms(x, 2).terms[1], (std::vector<double>{1, 2, 2, 4}));
  EXPECT_EQ(kron_terms(x, 3).terms[2], (std::vector<double>{1, 2, 2, 4, 2, 4, 4, 8}));
  const auto scalar = kron_terms(std::vector<double>{3}, 4);
  for (int j = 1; j <= 4; ++j) EXPECT_EQ(scalar.order(j)[0], std::pow(3.0, j));
}

TEST(Kronecker, BudgetIsEnforced) {
  EXPECT_THROW(kron_terms(std::vector<double>(100, 1.0), 5, 1'000'000), ResourceLimitError);
  EXPECT_THROW(DenseKernel::zeros(100, 5, 1'000'000), ResourceLimitError);
  EXPECT_THROW(DenseKernel::zeros(3, 0), std::invalid_argument);
}

TEST(Kronecker, ForwardExamples) {
  EXPECT_DOUBLE_EQ(tvc_forward(std::vector<double>{1, 2}, dense_ones(2, 2)), 12.0);
  auto bias_only = DenseKernel::zeros(3, 3);
  bias_only.bias = 7.0;
  EXPECT_DOUBLE_EQ(tvc_forward(std::vector<double>{0.3, -2, 5}, bias_only), 7.0);
  auto linear = DenseKernel::zeros(3, 1);
  linear.weights[0] = {1, -2, 3};
  linear.bias = 0.5;
  EXPECT_DOUBLE_EQ(tvc_forward(std::vector<double>{1, 1, 2}, linear), 1 - 2 + 6 + 0.5);
}

TEST(Kronecker, WeightGradients) {
  const auto g = tvc_grad_weights(std::vector<double>{1, 2}, 1.0, 2);
  EXPECT_EQ(g.weights[1], (std::vector<double>{1, 2, 2, 4}));
  EXPECT_EQ(tvc_grad_weights(std::vector<double>{3}, 2.0, 3).weights[2], std::vector<double>{54});
  for (const auto& w : tvc_grad_weights(std::vector<double>{1, 2, 3}, 0.0, 3).weights)
    for (double v : w) EXPECT_EQ(v, 0.0);
}

TEST(Kronecker, InputGradientClosedForms) {
  std::mt19937_64 rng(5);
  const auto x = random_vector(4, rng);
  auto k = DenseKernel::zeros(4, 2);
  k.weights[0] = random_vector(4, rng);
  const auto g1 = tvc_grad_input(x, DenseKernel{4, 1, {k.weights[0]}, 0.0}, 1.5);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g1[i], 1.5 * k.weights[0][i]);
  // Symmetric W2: grad = u (w1 + 2 W2 x).
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j <= i; ++j) k.weights[1][i * 4 + j] = k.weights[1][j * 4 + i] = random_vector(1, rng)[0];
  const auto g2 = tvc_grad_input(x, k, 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    double expected = k.weights[0][i];
    for (std::size_t j = 0; j < 4; ++j) expected += 2.0 * k.weights[1][i * 4 + j] * x[j];
    EXPECT_NEAR(g2[i], 0.5 * expected, 1e-14);
  }
}

TEST(Kronecker, FiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int n = 1; n <= 6; ++n) {
    for (int r = 1; r <= 4; ++r) {
      auto k = DenseKernel::zeros(n, r);
      for (auto& w : k.weights) w = random_vector(w.size(), rng);
      const auto x = random_vector(static_cast<std::size_t>(n), rng);
      const auto analytic = tvc_grad_input(x, k, 1.0);
      const auto res = grad_check(
          [&](std::span<const double> p, std::span<double> g) {
            if (!g.empty()) std::copy(analytic.begin(), analytic.end(), g.begin());
            return tvc_forward(p, k);
          },
          x);
      EXPECT_LE(res.max_rel_error, 1e-6) << "n=" << n << " r=" << r;

      const auto gw = tvc_grad_weights(x, 1.0, r);
      std::vector<double> flat, analytic_w;
      for (const auto& w : k.weights) flat.insert(flat.end(), w.begin(), w.end());
      for (const auto& w : gw.weights) analytic_w.insert(analytic_w.end(), w.begin(), w.end());
      const auto rw = grad_check(
          [&](std::span<const double> p, std::span<double> g) {
            if (!g.empty()) std::copy(analytic_w.begin(), analytic_w.end(), g.begin());
            auto probe = k;
            std::size_t off = 0;
            for (auto& w : probe.weights) {
              std::copy(p.begin() + static_cast<std::ptrdiff_t>(off),
                        p.begin() + static_cast<std::ptrdiff_t>(off + w.size()), w.begin());
              off += w.size();
            }
            return tvc_forward(x, probe);
          },
          flat);
      EXPECT_LE(rw.max_rel_error, 1e-6) << "n=" << n << " r=" << r;
    }
  }
}

TEST(Kronecker, GradientMatchesExplicitJacobianExactlyOnIntegers) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> small(-3, 3);
  for (int n = 1; n <= 4; ++n) {
    for (int r = 1; r <= 3; ++r) {
      auto k = DenseKernel::zeros(n, r);
      for (auto& w : k.weights)
        for (double& v : w) v = small(rng);
      std::vector<double> x(static_cast<std::size_t>(n));
      for (double& v : x) v = small(rng);
      EXPECT_EQ(tvc_grad_input(x, k, 1.0), reference::jacobian_grad_input(x, k));
    }
  }
}

// Moving weight between index permutations of the same multiset leaves y unchanged.
TEST(Kronecker, SymmetrizationInvariance) {
  std::mt19937_64 rng(8);
  auto k = DenseKernel::zeros(3, 2);
  for (auto& w : k.weights) w = random_vector(w.size(), rng);
  const auto x = random_vector(3, rng);
  const double before = tvc_forward(x, k);
  auto moved = k;
  moved.weights[1][0 * 3 + 2] += moved.weights[1][2 * 3 + 0];
  moved.weights[1][2 * 3 + 0] = 0.0;
  EXPECT_NEAR(tvc_forward(x, moved), before, 1e-14);
}

TEST(Embedding, CanonicalPlacement) {
  auto uk = UniqueKernel::zeros(2, 2);
  uk.weights[1] = {10, 11, 12};  // rows [0,0],[1,1],[0,1]
  uk.bias = 3.0;
  const auto dense = embed_unique_weights(uk, IndexSet(2, 2).fpms());
  EXPECT_EQ(dense.weights[1], (std::vector<double>{10, 12, 0, 11}));
  EXPECT_EQ(dense.bias, 3.0);
}

// --- Unique-term route -------------------------------------------------------

TEST(UniqueTerms, SmallVectors) {
  const std::vector<double> x{1, 2};
  const auto c2 = build_terms_progressive(x, IndexSet(2, 2));
  EXPECT_EQ(std::vector<double>(c2.order(2).begin(), c2.order(2).end()), (std::vector<double>{1, 4, 2}));
  const auto c3 = build_terms_progressive(x, IndexSet(2, 3));
  // FPM^3 rows for n=2: [0,0,0],[1,1,1],[0,1,1],[0,0,1].
  EXPECT_EQ(std::vector<double>(c3.order(3).begin(), c3.order(3).end()), (std::vector<double>{1, 8, 4, 2}));
  const auto ones = build_terms_progressive(std::vector<double>(5, 1.0), IndexSet(5, 4));
  for (double v : ones.all()) EXPECT_EQ(v, 1.0);
}

TEST(UniqueTerms, EveryTermIsItsRowProduct) {
  std::mt19937_64 rng(9);
  for (int n = 1; n <= 7; ++n) {
    for (int r = 1; r <= 4; ++r) {
      const IndexSet set(n, r);
      const auto x = random_vector(static_cast<std::size_t>(n), rng);
      const auto cache = build_terms_progressive(x, set);
      for (int j = 1; j <= r; ++j) {
        const auto& rows = set.fpm(j).rows;
        for (std::size_t k = 0; k < rows.rows(); ++k) {
          double p = 1.0;
          for (Index i : rows.row(k)) p *= x[i];
          EXPECT_NEAR(cache.order(j)[k], p, 1e-15);
        }
      }
    }
  }
}

TEST(UniqueTerms, VariantIndependence) {
  std::mt19937_64 rng(10);
  const IndexSet set(6, 4);
  const auto x = random_vector(6, rng);
  const auto k = random_kernel(6, 4, rng);
  const double base = evc_forward(build_terms_progressive(x, set, 0), k);
  for (std::size_t v = 1; v < 4; ++v) {
    const double y = evc_forward(build_terms_progressive(x, set, v), k);
    EXPECT_LE(std::abs(y - base), 1e-15 * std::max(1.0, std::abs(base)) * 8);
  }
}

TEST(UniqueForward, Examples) {
  auto k = UniqueKernel::zeros(2, 2);
  k.weights = {{1, 1}, {1, 1, 1}};
  EXPECT_DOUBLE_EQ(evc_forward(std::vector<double>{1, 2}, k, IndexSet(2, 2)), 10.0);
  auto bias = UniqueKernel::zeros(4, 3);
  bias.bias = 5.0;
  EXPECT_DOUBLE_EQ(evc_forward(std::vector<double>{1, 2, 3, 4}, bias, IndexSet(4, 3)), 5.0);
}

TEST(UniqueForward, RejectsMismatchedShapes) {
  const auto k = UniqueKernel::zeros(3, 2);
  EXPECT_THROW(evc_forward(std::vector<double>{1, 2}, k, IndexSet(3, 2)), std::invalid_argument);
  EXPECT_THROW(evc_forward(std::vector<double>{1, 2, 3}, k, IndexSet(4, 2)), std::invalid_argument);
}

TEST(UniqueForward, MatchesKroneckerRoute) {
  std::mt19937_64 rng(12);
  for (int n = 2; n <= 9; ++n) {
    for (int r = 1; r <= 4; ++r) {
      const auto set = cached_index_set(n, r);
      for (int t = 0; t < 20; ++t) {
        const auto x = random_vector(static_cast<std::size_t>(n), rng);
        const auto k = random_kernel(n, r, rng);
        const double kron = tvc_forward(x, embed_unique_weights(k, set->fpms()));
        EXPECT_LE(std::abs(evc_forward(x, k, *set) - kron) / (1 + std::abs(kron)), 1e-12);
      }
    }
  }
}

TEST(UniqueBackward, WeightGradientIsTheTermCache) {
  const IndexSet set(3, 3);
  const auto cache = build_terms_progressive(std::vector<double>{0.5, -1, 2}, set);
  const auto g = evc_grad_weights(cache, 1.0);
  for (int j = 1; j <= 3; ++j) {
    EXPECT_TRUE(std::equal(g.order_weights(j).begin(), g.order_weights(j).end(), cache.order(j).begin()));
  }
  EXPECT_EQ(g.bias, 1.0);
  for (const auto& w : evc_grad_weights(cache, 0.0).weights)
    for (double v : w) EXPECT_EQ(v, 0.0);
}

TEST(UniqueBackward, InputGradientExamples) {
  const IndexSet set(2, 2);
  auto k = UniqueKernel::zeros(2, 2);
  k.weights[1] = {1, 1, 1};
  const std::vector<double> x{1, 2};
  EXPECT_EQ(evc_grad_input(build_terms_progressive(x, set), k, set, 1.0), (std::vector<double>{4, 5}));
  auto linear = UniqueKernel::zeros(3, 1);
  linear.weights[0] = {2, -1, 4};
  const IndexSet s1(3, 1);
  EXPECT_EQ(evc_grad_input(build_terms_progressive(std::vector<double>{7, 8, 9}, s1), linear, s1, 0.5),
            (std::vector<double>{1, -0.5, 2}));
}

TEST(UniqueBackward, MatchesKroneckerAndOracles) {
  std::mt19937_64 rng(13);
  for (int n = 2; n <= 6; ++n) {
    for (int r = 1; r <= 4; ++r) {
      const auto set = cached_index_set(n, r);
      const auto x = random_vector(static_cast<std::size_t>(n), rng);
      const auto k = random_kernel(n, r, rng);
      const auto fast = evc_grad_input(build_terms_progressive(x, *set), k, *set, 1.0);
      const auto kron = tvc_grad_input(x, embed_unique_weights(k, set->fpms()), 1.0);
      const auto power = reference::monomial_grad_input(x, k, *set);
      const auto scatter = reference::materialized_scatter_grad_input(x, k, *set);
      for (std::size_t i = 0; i < fast.size(); ++i) {
        EXPECT_LE(std::abs(fast[i] - kron[i]) / (1 + std::abs(kron[i])), 1e-10);
        EXPECT_LE(std::abs(fast[i] - power[i]) / (1 + std::abs(power[i])), 1e-10);
        EXPECT_LE(std::abs(fast[i] - scatter[i]) / (1 + std::abs(scatter[i])), 1e-10);
      }
    }
  }
}

TEST(UniqueBackward, CorruptedPcmIsDetected) {
  IndexSet set(3, 2);
  set.mutable_pcms(2).variants[0].prev_row[0] = 99;
  EXPECT_THROW(build_terms_progressive(std::vector<double>{1, 2, 3}, set), InternalError);
}

TEST(Kernels, ParameterCountsAndInitScale) {
  std::mt19937_64 rng(14);
  const auto k = random_unique_kernel(9, 3, rng);
  EXPECT_EQ(k.parameter_count(), count_params(9, 3));
  for (double v : k.order_weights(1)) EXPECT_LE(std::abs(v), 1.0 / 3.0);
  for (double v : k.order_weights(3)) EXPECT_LE(std::abs(v), 1.0 / 165.0);
  auto bad = k;
  bad.weights[1].pop_back();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// --- Conv layer --------------------------------------------------------------

ConvGeometry geom(int c, int h, int w, int k, int pad) {
  ConvGeometry g;
  g.kernel_h = g.kernel_w = k;
  g.pad_h = g.pad_w = pad;
  g.in_channels = c;
  g.in_h = h;
  g.in_w = w;
  return g;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const auto v = random_vector(t.size(), rng);
  std::copy(v.begin(), v.end(), t.data().begin());
  return t;
}

TEST(Conv, OneByOneFirstOrderIsLinearConv) {
  std::mt19937_64 rng(15);
  auto layer = make_volterra_conv(geom(3, 4, 4, 1, 0), 2, 1, rng);
  const auto x = random_tensor({2, 3, 4, 4}, rng);
  const auto y = conv2d_forward(x, layer).output;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          double expected = layer.kernels[o].bias;
          for (std::size_t c = 0; c < 3; ++c) expected += layer.kernels[o].weights[0][c] * x.at(b, c, i, j);
          EXPECT_NEAR(y.at(b, o, i, j), expected, 1e-14);
        }
}

TEST(Conv, MatchesPerPatchKroneckerEvaluation) {
  std::mt19937_64 rng(16);
  auto layer = make_volterra_conv(geom(2, 4, 4, 3, 1), 3, 2, rng);
  for (auto& k : layer.kernels) k = random_kernel(k.n, k.order, rng);
  const auto x = random_tensor({1, 2, 4, 4}, rng);
  const auto y = conv2d_forward(x, layer).output;
  const auto patches = im2col(x, layer.geometry);
  for (std::size_t o = 0; o < 3; ++o) {
    const auto dense = embed_unique_weights(layer.kernels[o], layer.indices->fpms());
    for (std::size_t p = 0; p < patches.n_patches; ++p) {
      const double expected = tvc_forward(patches.row(p), dense);
      EXPECT_LE(std::abs(y[o * 16 + p] - expected) / (1 + std::abs(expected)), 1e-10);
    }
  }
}

TEST(Conv, SinglePatchReducesToVectorOps) {
  std::mt19937_64 rng(17);
  auto layer = make_volterra_conv(geom(2, 3, 3, 3, 0), 1, 2, rng);
  layer.kernels[0] = random_kernel(18, 2, rng);
  const auto x = random_tensor({1, 2, 3, 3}, rng);
  const auto f = conv2d_forward(x, layer);
  ASSERT_EQ(f.output.size(), 1u);
  EXPECT_NEAR(f.output[0], evc_forward(x.storage(), layer.kernels[0], *layer.indices), 1e-14);
  const auto g = conv2d_backward(Tensor({1, 1, 1, 1}, 1.0), f.saved, layer);
  const auto cache = build_terms_progressive(x.storage(), *layer.indices);
  const auto gi = evc_grad_input(cache, layer.kernels[0], *layer.indices, 1.0);
  for (std::size_t i = 0; i < gi.size(); ++i) EXPECT_NEAR(g.input[i], gi[i], 1e-14);
  EXPECT_EQ(g.kernels[0].weights, evc_grad_weights(cache, 1.0).weights);
}

TEST(Conv, ZeroUpstreamZeroGradients) {
  std::mt19937_64 rng(18);
  auto layer = make_volterra_conv(geom(2, 4, 4, 3, 1), 2, 3, rng);
  const auto f = conv2d_forward(random_tensor({1, 2, 4, 4}, rng), layer);
  const auto g = conv2d_backward(Tensor(f.output.shape()), f.saved, layer);
  for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
  for (const auto& k : g.kernels) {
    EXPECT_EQ(k.bias, 0.0);
    for (const auto& w : k.weights)
      for (double v : w) EXPECT_EQ(v, 0.0);
  }
}

TEST(Conv, RecomputeModeMatchesRetainedTerms) {
  std::mt19937_64 rng(19);
  auto layer = make_volterra_conv(geom(2, 5, 5, 3, 1), 2, 3, rng);
  const auto x = random_tensor({2, 2, 5, 5}, rng);
  const auto kept = conv2d_forward(x, layer);
  const auto lean = conv2d_forward(x, layer, ConvOptions{false});
  EXPECT_FALSE(lean.saved.has_terms());
  EXPECT_EQ(kept.output.storage(), lean.output.storage());
  const auto up = random_tensor(kept.output.shape(), rng);
  const auto a = conv2d_backward(up, kept.saved, layer);
  const auto b = conv2d_backward(up, lean.saved, layer);
  EXPECT_EQ(a.input.storage(), b.input.storage());
  EXPECT_EQ(a.kernels[1].weights, b.kernels[1].weights);
}

// Loss = sum of outputs on a 1x2x4x4 input, r = 3.
TEST(Conv, FullLayerFiniteDifferences) {
  std::mt19937_64 rng(20);
  auto layer = make_volterra_conv(geom(2, 4, 4, 3, 1), 2, 3, rng);
  for (auto& k : layer.kernels) k = random_kernel(k.n, k.order, rng);
  auto x = random_tensor({1, 2, 4, 4}, rng);
  std::vector<UniqueKernel> grads;
  for (const auto& k : layer.kernels) grads.push_back(UniqueKernel::zeros(k.n, k.order));
  std::vector<double> gx(x.size());
  std::vector<ParamRef> refs;
  append_kernel_refs(refs, "conv", layer.kernels, grads);
  refs.push_back({"input", x.data(), gx});
  const auto res = grad_check_params(
      [&](bool want) {
        auto f = conv2d_forward(x, layer);
        double s = 0.0;
        for (double v : f.output.data()) s += v;
        if (want) {
          auto g = conv2d_backward(Tensor(f.output.shape(), 1.0), f.saved, layer);
          for (std::size_t o = 0; o < grads.size(); ++o) {
            for (std::size_t j = 0; j < grads[o].weights.size(); ++j) grads[o].weights[j] = g.kernels[o].weights[j];
            grads[o].bias = g.kernels[o].bias;
          }
          std::copy(g.input.storage().begin(), g.input.storage().end(), gx.begin());
        }
        return s;
      },
      refs);
  EXPECT_LE(res.max_rel_error, 1e-5) << res.worst_name;
}

// --- Kernel container --------------------------------------------------------

TEST(KernelIo, RoundTripIsBitExact) {
  std::mt19937_64 rng(21);
  std::vector<UniqueKernel> ks;
  for (int i = 0; i < 3; ++i) ks.push_back(random_kernel(5, 3, rng));
  std::stringstream buf;
  write_kernels(buf, ks);
  const auto back = read_kernels(buf);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].weights, ks[i].weights);
    EXPECT_EQ(back[i].bias, ks[i].bias);
  }
}

TEST(KernelIo, TruncationAndBadMagicAreFormatErrors) {
  std::mt19937_64 rng(22);
  std::stringstream buf;
  const std::vector<UniqueKernel> one{random_kernel(3, 2, rng)};
  write_kernels(buf, one);
  const auto bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_kernels(cut), FormatError);
  std::stringstream bad("XXXX" + bytes.substr(4));
  EXPECT_THROW(read_kernels(bad), FormatError);
}

}  // namespace
}  // namespace evc
