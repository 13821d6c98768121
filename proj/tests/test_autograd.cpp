#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "evc/autograd.hpp"
#include "evc/grad_check.hpp"

namespace evc {
namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (double& v : t.data()) v = d(rng);
  return t;
}

using Op = std::function<Graph::NodeId(Graph&, Graph::NodeId)>;

// loss = CE(affine(flatten(op(x)))) checked against central differences in x.
double input_gradient_error(const Op& op, const Tensor& x0, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph probe;
  const auto features = probe.value(ops::flatten(probe, op(probe, probe.constant(x0)))).dim(1);
  const auto head = Affine::random(static_cast<int>(features), classes, rng);
  std::vector<int> labels;
  for (std::size_t b = 0; b < x0.dim(0); ++b) labels.push_back(static_cast<int>(b % static_cast<std::size_t>(classes)));
  const auto check = grad_check(
      [&](std::span<const double> p, std::span<double> grad) {
        Graph g;
        auto head_grad = Affine::zeros(static_cast<int>(features), classes);
        const auto x = g.constant(Tensor(x0.shape(), std::vector<double>(p.begin(), p.end())));
        const auto loss = ops::softmax_cross_entropy(g, ops::affine(g, ops::flatten(g, op(g, x)), head, head_grad), labels);
        if (!grad.empty()) {
          g.backward(loss);
          const auto& gx = g.grad(x);
          std::copy(gx.storage().begin(), gx.storage().end(), grad.begin());
        }
        return g.value(loss)[0];
      },
      x0.storage());
  return check.max_rel_error;
}

TEST(Autograd, RecordRejectsForwardReferences) {
  Graph g;
  const auto a = g.constant(Tensor({1}, 1.0));
  EXPECT_THROW(g.record(Tensor({1}), {a + 1}, nullptr), std::invalid_argument);
}

TEST(Autograd, BackwardRequiresAScalarRoot) {
  Graph g;
  const auto a = g.constant(Tensor({2}));
  EXPECT_THROW(g.backward(a), std::invalid_argument);
}

TEST(Autograd, EachReachableNodeRunsBackwardOnce) {
  std::mt19937_64 rng(1);
  Graph g;
  const auto x = g.constant(random_tensor({2, 1, 4, 4}, rng));
  const auto unused = ops::relu(g, x);  // recorded but not on the loss path
  (void)unused;
  const auto pooled = ops::avg_pool(g, ops::relu(g, x), 2);
  auto fc = Affine::random(4, 2, rng);
  auto fc_grad = Affine::zeros(4, 2);
  const std::vector<int> labels{0, 1};
  const auto loss = ops::softmax_cross_entropy(g, ops::affine(g, ops::flatten(g, pooled), fc, fc_grad), labels);
  g.backward(loss);
  // relu, avg_pool, flatten, affine, loss
  EXPECT_EQ(g.backward_calls(), 5u);
  // A second sweep recomputes rather than doubling node gradients.
  const Tensor first = g.grad(x);
  g.backward(loss);
  EXPECT_EQ(g.grad(x).storage(), first.storage());
}

TEST(Autograd, FanOutAccumulates) {
  Graph g;
  const auto x = g.constant(Tensor({1, 1}, std::vector<double>{0.5}));
  const auto two = g.record(Tensor({1, 2}, std::vector<double>{0.5, 0.5}), {x}, [x](Graph& graph, Graph::NodeId self) {
    const auto& up = graph.grad(self);
    graph.accumulate_grad(x, Tensor({1, 1}, std::vector<double>{up[0] + up[1]}));
  });
  const std::vector<int> labels{0};
  const auto loss = ops::softmax_cross_entropy(g, two, labels);
  g.backward(loss);
  // Equal logits: dL/dz = (0.5 - 1, 0.5), summed through the fan-out.
  EXPECT_NEAR(g.grad(x)[0], 0.0, 1e-15);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  Graph g;
  const auto z = g.constant(Tensor({2, 4}));
  const std::vector<int> labels{1, 3};
  EXPECT_NEAR(g.value(ops::softmax_cross_entropy(g, z, labels))[0], std::log(4.0), 1e-15);
}

TEST(SoftmaxCrossEntropy, StableForLargeLogits) {
  Graph g;
  const auto z = g.constant(Tensor({2, 2}, std::vector<double>{1000.0, 0.0, 1000.0, 0.0}));
  const std::vector<int> labels{0, 1};
  const double loss = g.value(ops::softmax_cross_entropy(g, z, labels))[0];
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 500.0, 1e-9);
}

TEST(SoftmaxCrossEntropy, RejectsBadLabels) {
  Graph g;
  const auto z = g.constant(Tensor({1, 3}));
  const std::vector<int> out_of_range{3};
  const std::vector<int> too_many{0, 1};
  EXPECT_THROW(ops::softmax_cross_entropy(g, z, out_of_range), std::invalid_argument);
  EXPECT_THROW(ops::softmax_cross_entropy(g, z, too_many), std::invalid_argument);
}

TEST(AutogradOps, RelusAndPoolsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({2, 2, 4, 4}, rng);
  EXPECT_LE(input_gradient_error([](Graph& g, Graph::NodeId n) { return ops::relu(g, n); }, x, 3, 1), 1e-7);
  EXPECT_LE(input_gradient_error([](Graph& g, Graph::NodeId n) { return ops::avg_pool(g, n, 2); }, x, 3, 2), 1e-7);
  EXPECT_LE(input_gradient_error([](Graph& g, Graph::NodeId n) { return ops::global_avg_pool(g, n); }, x, 3, 3),
            1e-7);
}

TEST(AutogradOps, AvgPoolRejectsIndivisibleShapes) {
  Graph g;
  const auto x = g.constant(Tensor({1, 1, 5, 4}));
  EXPECT_THROW(ops::avg_pool(g, x, 2), std::invalid_argument);
}

TEST(AutogradOps, VolterraConvMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  ConvGeometry geo;
  geo.kernel_h = geo.kernel_w = 3;
  geo.pad_h = geo.pad_w = 1;
  geo.in_channels = 2;
  geo.in_h = geo.in_w = 4;
  const auto layer = make_volterra_conv(geo, 2, 3, rng);
  const auto x = random_tensor({2, 2, 4, 4}, rng);
  std::vector<UniqueKernel> kg;
  for (int i = 0; i < 2; ++i) kg.push_back(UniqueKernel::zeros(layer.n(), 3));
  EXPECT_LE(input_gradient_error([&](Graph& g, Graph::NodeId n) { return ops::volterra_conv(g, n, layer, kg); }, x,
                                 2, 4),
            1e-6);
}

TEST(AutogradOps, BatchNormAndHlaMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor({2, 4, 4, 4}, rng);
  auto bn = BatchNorm2d::identity(4);
  bn.gamma = {0.5, 1.5, 1.0, 2.0};
  std::vector<double> dg(4), db(4);
  EXPECT_LE(input_gradient_error(
                [&](Graph& g, Graph::NodeId n) { return ops::batch_norm(g, n, bn, dg, db, Mode::Train); }, x, 3, 5),
            1e-6);
  auto hla = make_hla(HlaConfig{4, 2, true}, 4, 4, rng);
  auto hg = HlaGradients::zeros_like(hla);
  EXPECT_LE(input_gradient_error([&](Graph& g, Graph::NodeId n) { return ops::hla(g, n, hla, hg, Mode::Train); }, x,
                                 3, 6),
            1e-6);
}

TEST(AutogradOps, AffineParameterGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  const auto x = random_tensor({3, 5}, rng);
  auto fc = Affine::random(5, 4, rng);
  auto fc_grad = Affine::zeros(5, 4);
  const std::vector<int> labels{0, 3, 2};
  std::vector<ParamRef> refs{{"w", fc.weight.data(), fc_grad.weight.data()}, {"b", fc.bias, fc_grad.bias}};
  const auto check = grad_check_params(
      [&](bool want_grad) {
        Graph g;
        auto scratch = Affine::zeros(5, 4);
        Affine& sink = want_grad ? fc_grad : scratch;
        if (want_grad) {
          std::fill(fc_grad.weight.data().begin(), fc_grad.weight.data().end(), 0.0);
          std::fill(fc_grad.bias.begin(), fc_grad.bias.end(), 0.0);
        }
        const auto loss = ops::softmax_cross_entropy(g, ops::affine(g, g.constant(x), fc, sink), labels);
        if (want_grad) g.backward(loss);
        return g.value(loss)[0];
      },
      refs);
  EXPECT_LE(check.max_rel_error, 1e-8) << check.worst_name;
}

}  // namespace
}  // namespace evc
