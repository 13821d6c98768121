#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "evc/error.hpp"
#include "evc/hla.hpp"

namespace evc {
namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (double& v : t.data()) v = d(rng);
  return t;
}

TEST(HlaConfig, RejectsBadRatios) {
  EXPECT_THROW((HlaConfig{8, 3, false}.validate()), std::invalid_argument);
  EXPECT_THROW((HlaConfig{4, 8, false}.validate()), std::invalid_argument);
  EXPECT_THROW((HlaConfig{4, 0, false}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((HlaConfig{8, 8, true}.validate()));
}

TEST(ChannelMeanClamp, Examples) {
  const std::vector<double> a{0.2, 0.4, 0.6};
  const auto out = channel_mean_clamp(a);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(out[0], 0.2);
  EXPECT_NEAR(out[1], 0.4, 1e-15);
  EXPECT_NEAR(out[2], 0.4, 1e-15);
  const std::vector<double> flat{0.3, 0.3, 0.3};
  EXPECT_EQ(channel_mean_clamp(flat), flat);
}

TEST(ChannelMeanClamp, NeverIncreasesAndKeepsTheMinimum) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(1 + trial % 9);
    for (double& v : a) v = d(rng);
    const auto out = channel_mean_clamp(a);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_LE(out[i], a[i]);
      EXPECT_LE(out[i], mean + 1e-15);
    }
    const auto lo = std::min_element(a.begin(), a.end()) - a.begin();
    EXPECT_EQ(out[static_cast<std::size_t>(lo)], a[static_cast<std::size_t>(lo)]);
  }
}

TEST(ShakeCombine, ExamplesAndRange) {
  EXPECT_DOUBLE_EQ(shake_combine(0.5, 0.5), 0.75);
  EXPECT_DOUBLE_EQ(shake_combine(0.0, 0.3), 0.3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(1e-9, 1.0 - 1e-9);
  for (int i = 0; i < 10000; ++i) {
    const double a = d(rng), b = d(rng);
    const double y = shake_combine(a, b);
    EXPECT_GT(y, std::max(a, b));
    EXPECT_LT(y, 1.0);
  }
}

TEST(Hla, ZeroBlockScalesByThreeQuarters) {
  std::mt19937_64 rng(9);
  for (bool input_bn : {false, true}) {
    const auto p = zero_hla(HlaConfig{4, 2, input_bn}, 5, 6);
    const Tensor x = random_tensor({2, 4, 5, 6}, rng);
    const auto a = se_branch(x, p);
    for (double v : a.data()) EXPECT_DOUBLE_EQ(v, 0.5);
    const auto b = local_branch(x, p, Mode::Train);
    for (double v : b.data()) EXPECT_DOUBLE_EQ(v, 0.5);
    const auto f = hla_forward(x, p, Mode::Train);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(f.output[i], 0.75 * x[i]);
  }
}

TEST(Hla, ForcedBranchesGiveIdentity) {
  std::mt19937_64 rng(11);
  const auto p = make_hla(HlaConfig{4, 2, false}, 4, 4, rng);
  const Tensor x = random_tensor({1, 4, 4, 4}, rng);
  const auto f = hla_forward(x, p, Mode::Train, HlaHooks{1.0, 1.0});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(f.output[i], x[i]);
  // Only one branch pinned to 0: the other passes through unchanged.
  const auto local_only = hla_forward(x, p, Mode::Train, HlaHooks{0.0, std::nullopt});
  const auto b = local_branch(x, p, Mode::Train);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(local_only.output[i], x[i] * b[i], 1e-15);
}

TEST(Hla, CoefficientsStayInsideTheOpenUnitInterval) {
  std::mt19937_64 rng(13);
  const auto p = make_hla(HlaConfig{8, 4, true}, 6, 6, rng);
  const Tensor x = random_tensor({3, 8, 6, 6}, rng);
  const auto a = se_branch(x, p);
  const auto b = local_branch(x, p, Mode::Train);
  ASSERT_EQ(b.shape(), x.shape());
  for (double v : a.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : b.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  const auto f = hla_forward(x, p, Mode::Train);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) {
      EXPECT_LT(std::abs(f.output[i]), std::abs(x[i]));
    }
  }
}

TEST(Hla, SeBranchIsChannelPermutationEquivariant) {
  std::mt19937_64 rng(17);
  auto p = make_hla(HlaConfig{6, 3, false}, 4, 4, rng);
  const Tensor x = random_tensor({2, 6, 4, 4}, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};  // new channel c holds old perm[c]
  const std::size_t C = 6, R = 2, S = 16;

  Tensor px(x.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t s = 0; s < S; ++s) px[(b * C + c) * S + s] = x[(b * C + perm[c]) * S + s];
  auto q = p;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) q.se_reduce[r * C + c] = p.se_reduce[r * C + perm[c]];
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < R; ++r) q.se_expand[c * R + r] = p.se_expand[perm[c] * R + r];
    q.se_expand_bias[c] = p.se_expand_bias[perm[c]];
  }

  const auto a = se_branch(x, p);
  const auto pa = se_branch(px, q);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < C; ++c) EXPECT_NEAR(pa[b * C + c], a[b * C + perm[c]], 1e-15);
}

TEST(Hla, ShapeMismatchIsRejected) {
  std::mt19937_64 rng(19);
  const auto p = make_hla(HlaConfig{4, 2, false}, 4, 4, rng);
  EXPECT_THROW(hla_forward(Tensor({1, 3, 4, 4}), p, Mode::Train), std::invalid_argument);
  EXPECT_THROW(hla_forward(Tensor({1, 4, 5, 4}), p, Mode::Train), std::invalid_argument);
  EXPECT_THROW(se_branch(Tensor({4, 4}), p), std::invalid_argument);
}

TEST(Hla, InferenceModeIsBatchIndependent) {
  std::mt19937_64 rng(23);
  const auto p = make_hla(HlaConfig{4, 2, true}, 4, 4, rng);
  const Tensor x = random_tensor({2, 4, 4, 4}, rng);
  const Tensor first({1, 4, 4, 4}, std::vector<double>(x.storage().begin(), x.storage().begin() + 64));
  const auto both = hla_forward(x, p, Mode::Inference);
  const auto one = hla_forward(first, p, Mode::Inference);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(both.output[i], one.output[i], 1e-14);
}

TEST(Hla, SerialisationRoundTrips) {
  std::mt19937_64 rng(29);
  auto p = make_hla(HlaConfig{4, 2, true}, 5, 5, rng);
  p.bn.running_mean = {0.1, 0.2, 0.3, 0.4};
  p.input_bn->gamma = {1.5, 0.5, 2.0, 1.0};
  std::stringstream buf;
  write_hla(buf, p);
  const auto q = read_hla(buf, 5, 5);
  EXPECT_EQ(q.config.channels, 4);
  EXPECT_EQ(q.config.reduction_ratio, 2);
  ASSERT_TRUE(q.input_bn.has_value());
  EXPECT_EQ(q.se_reduce.storage(), p.se_reduce.storage());
  EXPECT_EQ(q.se_expand_bias, p.se_expand_bias);
  EXPECT_EQ(q.bn.running_mean, p.bn.running_mean);
  EXPECT_EQ(q.input_bn->gamma, p.input_bn->gamma);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(q.volterra.kernels[k].weights, p.volterra.kernels[k].weights);

  const Tensor x = random_tensor({1, 4, 5, 5}, rng);
  EXPECT_EQ(hla_forward(x, p, Mode::Inference).output.storage(),
            hla_forward(x, q, Mode::Inference).output.storage());

  std::stringstream again;
  write_hla(again, p);
  std::stringstream cut(again.str().substr(0, again.str().size() - 5));
  EXPECT_THROW(read_hla(cut, 5, 5), FormatError);
}

}  // namespace
}  // namespace evc
