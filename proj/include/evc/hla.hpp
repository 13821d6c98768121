#pragma once

// High-order local attention block.
//
//   out = x * (a + b - a b)
//
// a: per-channel squeeze-excitation coefficient, clamped to the per-sample
//    channel mean so that the combined coefficient does not saturate;
// b: per-position coefficient from a second-order Volterra conv (3x3,
//    stride 1, pad 1), batch norm and a sigmoid.

#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "evc/batchnorm.hpp"
#include "evc/params.hpp"
#include "evc/tensor.hpp"
#include "evc/volterra_efficient.hpp"

namespace evc {

struct HlaConfig {
  int channels = 0;
  int reduction_ratio = 1;
  bool use_input_batchnorm = false;

  int reduced() const { return channels / reduction_ratio; }
  void validate() const;
};

struct HlaParams {
  HlaConfig config;
  Tensor se_reduce;  // [reduced, channels]
  std::vector<double> se_reduce_bias;
  Tensor se_expand;  // [channels, reduced]
  std::vector<double> se_expand_bias;
  VolterraConvLayer volterra;
  BatchNorm2d bn;
  std::optional<BatchNorm2d> input_bn;

  int height() const { return volterra.geometry.in_h; }
  int width() const { return volterra.geometry.in_w; }
};

/// Random SE and Volterra weights, identity batch norms.
HlaParams make_hla(const HlaConfig& config, int height, int width, std::mt19937_64& rng);
/// All weights and biases zero, identity batch norms: the block scales x by 0.75.
HlaParams zero_hla(const HlaConfig& config, int height, int width);

/// min(a_i, mean(a)).
std::vector<double> channel_mean_clamp(std::span<const double> a);

inline double shake_combine(double a, double b) { return a + b - a * b; }

/// Clamped SE coefficients, shape [batch, channels].
Tensor se_branch(const Tensor& x, const HlaParams& params);
/// Local coefficients, shape of x.
Tensor local_branch(const Tensor& x, const HlaParams& params, Mode mode);

/// Test hooks that pin a branch to a constant; a pinned branch gets no gradient.
struct HlaHooks {
  std::optional<double> force_global;
  std::optional<double> force_local;
};

struct HlaSaved {
  Mode mode = Mode::Train;
  HlaHooks hooks;
  Tensor input;
  // SE branch
  Tensor pooled;     // [B, C]
  Tensor reduced;    // [B, Cr] pre-activation
  Tensor excited;    // [B, C] post-sigmoid, pre-clamp
  Tensor global;     // [B, C] clamped
  // local branch
  std::optional<BatchNormSaved> input_bn;
  ConvSaved conv;
  BatchNormSaved bn;
  Tensor local;      // [B, C, H, W]
  Tensor combined;   // [B, C, H, W]
};

struct HlaForward {
  Tensor output;
  HlaSaved saved;
};

struct HlaGradients {
  Tensor input;
  Tensor se_reduce;
  std::vector<double> se_reduce_bias;
  Tensor se_expand;
  std::vector<double> se_expand_bias;
  std::vector<UniqueKernel> volterra;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> input_bn_gamma;
  std::vector<double> input_bn_beta;

  /// Zero gradients shaped like `params`.
  static HlaGradients zeros_like(const HlaParams& params);
  /// Element-wise +=, used to accumulate across calls.
  void accumulate(const HlaGradients& other);
};

HlaForward hla_forward(const Tensor& x, const HlaParams& params, Mode mode,
                       const HlaHooks& hooks = {});
HlaGradients hla_backward(const Tensor& upstream, const HlaSaved& saved, const HlaParams& params);

/// Running-statistic update for both batch norms after a train-mode forward.
void commit_running_stats(HlaParams& params, const HlaSaved& saved);

std::vector<ParamRef> param_refs(HlaParams& params, HlaGradients& grads);

/// Kernel container for the Volterra branch followed by an "HLA1" section.
void write_hla(std::ostream& out, const HlaParams& params);
HlaParams read_hla(std::istream& in, int height, int width);

}  // namespace evc
