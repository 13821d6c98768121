#include "evc/hla.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "evc/error.hpp"
#include "evc/kernel_io.hpp"

namespace evc {
namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_input(const Tensor& x, const HlaParams& p) {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(p.config.channels) ||
      x.dim(2) != static_cast<std::size_t>(p.height()) ||
      x.dim(3) != static_cast<std::size_t>(p.width())) {
    throw std::invalid_argument("HLA block for " + std::to_string(p.config.channels) + "x" +
                                std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                                " inputs cannot take " + x.shape_string());
  }
}

ConvGeometry local_geometry(int channels, int height, int width) {
  ConvGeometry g;
  g.kernel_h = g.kernel_w = 3;
  g.pad_h = g.pad_w = 1;
  g.in_channels = channels;
  g.in_h = height;
  g.in_w = width;
  return g;
}

struct SeState {
  Tensor pooled, reduced, excited, global;
};

SeState run_se(const Tensor& x, const HlaParams& p) {
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  const auto R = static_cast<std::size_t>(p.config.reduced());
  SeState st{Tensor({B, C}), Tensor({B, R}), Tensor({B, C}), Tensor({B, C})};
  const auto in = x.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* src = in.data() + (b * C + c) * S;
      st.pooled[b * C + c] = std::accumulate(src, src + S, 0.0) / static_cast<double>(S);
    }
    for (std::size_t r = 0; r < R; ++r) {
      double z = p.se_reduce_bias[r];
      for (std::size_t c = 0; c < C; ++c) z += p.se_reduce[r * C + c] * st.pooled[b * C + c];
      st.reduced[b * R + r] = z;
    }
    for (std::size_t c = 0; c < C; ++c) {
      double z = p.se_expand_bias[c];
      for (std::size_t r = 0; r < R; ++r) {
        z += p.se_expand[c * R + r] * std::max(0.0, st.reduced[b * R + r]);
      }
      st.excited[b * C + c] = sigmoid(z);
    }
    const auto clamped = channel_mean_clamp(
        std::span<const double>(st.excited.data().data() + b * C, C));
    std::copy(clamped.begin(), clamped.end(), st.global.data().begin() + static_cast<std::ptrdiff_t>(b * C));
  }
  return st;
}

}  // namespace

void HlaConfig::validate() const {
  if (channels < 1 || reduction_ratio < 1 || reduction_ratio > channels ||
      channels % reduction_ratio != 0) {
    throw std::invalid_argument("HLA needs channels >= reduction_ratio >= 1 with channels divisible "
                                "by the reduction ratio");
  }
}

HlaParams zero_hla(const HlaConfig& config, int height, int width) {
  config.validate();
  const auto C = static_cast<std::size_t>(config.channels);
  const auto R = static_cast<std::size_t>(config.reduced());
  HlaParams p{config,
              Tensor({R, C}),
              std::vector<double>(R, 0.0),
              Tensor({C, R}),
              std::vector<double>(C, 0.0),
              zero_volterra_conv(local_geometry(config.channels, height, width), config.channels, 2),
              BatchNorm2d::identity(config.channels),
              std::nullopt};
  if (config.use_input_batchnorm) p.input_bn = BatchNorm2d::identity(config.channels);
  return p;
}

HlaParams make_hla(const HlaConfig& config, int height, int width, std::mt19937_64& rng) {
  HlaParams p = zero_hla(config, height, width);
  const auto init = [&rng](std::span<double> w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w) v = dist(rng);
  };
  init(p.se_reduce.data(), static_cast<std::size_t>(config.channels));
  init(p.se_reduce_bias, static_cast<std::size_t>(config.channels));
  init(p.se_expand.data(), static_cast<std::size_t>(config.reduced()));
  init(p.se_expand_bias, static_cast<std::size_t>(config.reduced()));
  p.volterra = make_volterra_conv(p.volterra.geometry, config.channels, 2, rng);
  return p;
}

std::vector<double> channel_mean_clamp(std::span<const double> a) {
  if (a.empty()) return {};
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), out.begin(), [mean](double v) { return std::min(v, mean); });
  return out;
}

Tensor se_branch(const Tensor& x, const HlaParams& params) {
  check_input(x, params);
  return run_se(x, params).global;
}

Tensor local_branch(const Tensor& x, const HlaParams& params, Mode mode) {
  check_input(x, params);
  Tensor u = params.input_bn ? batchnorm_forward(x, *params.input_bn, mode).output : x;
  const auto conv = conv2d_forward(u, params.volterra, ConvOptions{false});
  Tensor out = batchnorm_forward(conv.output, params.bn, mode).output;
  for (double& v : out.data()) v = sigmoid(v);
  return out;
}

HlaForward hla_forward(const Tensor& x, const HlaParams& params, Mode mode, const HlaHooks& hooks) {
  check_input(x, params);
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  HlaForward f;
  HlaSaved& s = f.saved;
  s.mode = mode;
  s.hooks = hooks;
  s.input = x;

  if (hooks.force_global) {
    s.global = Tensor({B, C}, *hooks.force_global);
  } else {
    auto se = run_se(x, params);
    s.pooled = std::move(se.pooled);
    s.reduced = std::move(se.reduced);
    s.excited = std::move(se.excited);
    s.global = std::move(se.global);
  }

  if (hooks.force_local) {
    s.local = Tensor(x.shape(), *hooks.force_local);
  } else {
    const Tensor* u = &x;
    Tensor normalized_input;
    if (params.input_bn) {
      auto ib = batchnorm_forward(x, *params.input_bn, mode);
      normalized_input = std::move(ib.output);
      s.input_bn = std::move(ib.saved);
      u = &normalized_input;
    }
    auto conv = conv2d_forward(*u, params.volterra);
    s.conv = std::move(conv.saved);
    auto bn = batchnorm_forward(conv.output, params.bn, mode);
    s.bn = std::move(bn.saved);
    s.local = std::move(bn.output);
    for (double& v : s.local.data()) v = sigmoid(v);
  }

  s.combined = Tensor(x.shape());
  f.output = Tensor(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double a = s.global[b * C + c];
      for (std::size_t i = (b * C + c) * S; i < (b * C + c + 1) * S; ++i) {
        s.combined[i] = shake_combine(a, s.local[i]);
        f.output[i] = x[i] * s.combined[i];
      }
    }
  }
  return f;
}

HlaGradients HlaGradients::zeros_like(const HlaParams& p) {
  HlaGradients g;
  g.se_reduce = Tensor(p.se_reduce.shape());
  g.se_reduce_bias.assign(p.se_reduce_bias.size(), 0.0);
  g.se_expand = Tensor(p.se_expand.shape());
  g.se_expand_bias.assign(p.se_expand_bias.size(), 0.0);
  for (const auto& k : p.volterra.kernels) g.volterra.push_back(UniqueKernel::zeros(k.n, k.order));
  g.bn_gamma.assign(p.bn.gamma.size(), 0.0);
  g.bn_beta.assign(p.bn.beta.size(), 0.0);
  if (p.input_bn) {
    g.input_bn_gamma.assign(p.input_bn->gamma.size(), 0.0);
    g.input_bn_beta.assign(p.input_bn->beta.size(), 0.0);
  }
  return g;
}

void HlaGradients::accumulate(const HlaGradients& o) {
  const auto add = [](std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  if (!input.empty() && !o.input.empty()) add(input.data(), o.input.data());
  add(se_reduce.data(), o.se_reduce.data());
  add(se_reduce_bias, o.se_reduce_bias);
  add(se_expand.data(), o.se_expand.data());
  add(se_expand_bias, o.se_expand_bias);
  for (std::size_t oc = 0; oc < volterra.size(); ++oc) {
    for (std::size_t j = 0; j < volterra[oc].weights.size(); ++j) {
      add(volterra[oc].weights[j], o.volterra[oc].weights[j]);
    }
    volterra[oc].bias += o.volterra[oc].bias;
  }
  add(bn_gamma, o.bn_gamma);
  add(bn_beta, o.bn_beta);
  add(input_bn_gamma, o.input_bn_gamma);
  add(input_bn_beta, o.input_bn_beta);
}

HlaGradients hla_backward(const Tensor& upstream, const HlaSaved& s, const HlaParams& params) {
  if (upstream.shape() != s.input.shape()) {
    throw std::invalid_argument("HLA backward: upstream " + upstream.shape_string() +
                                " does not match the forward input");
  }
  const Tensor& x = s.input;
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  const auto R = static_cast<std::size_t>(params.config.reduced());

  HlaGradients g = HlaGradients::zeros_like(params);
  g.input = Tensor(x.shape());
  Tensor d_global({B, C});
  Tensor d_local_pre(x.shape());  // gradient w.r.t. the pre-sigmoid local logits
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const double a = s.global[b * C + c];
      double da = 0.0;
      for (std::size_t i = (b * C + c) * S; i < (b * C + c + 1) * S; ++i) {
        g.input[i] = upstream[i] * s.combined[i];
        const double dy = upstream[i] * x[i];
        const double l = s.local[i];
        da += dy * (1.0 - l);
        d_local_pre[i] = dy * (1.0 - a) * l * (1.0 - l);
      }
      d_global[b * C + c] = da;
    }
  }

  if (!s.hooks.force_global) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* a0 = s.excited.data().data() + b * C;
      const double mean = std::accumulate(a0, a0 + C, 0.0) / static_cast<double>(C);
      // Clamped coordinates all equal the mean, which depends on every input.
      double clamped_sum = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        if (!(a0[c] < mean)) clamped_sum += d_global[b * C + c];
      }
      std::vector<double> dz2(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double da0 = (a0[c] < mean ? d_global[b * C + c] : 0.0) +
                           clamped_sum / static_cast<double>(C);
        dz2[c] = da0 * a0[c] * (1.0 - a0[c]);
      }
      std::vector<double> dz1(R, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        g.se_expand_bias[c] += dz2[c];
        for (std::size_t r = 0; r < R; ++r) {
          const double h = std::max(0.0, s.reduced[b * R + r]);
          g.se_expand[c * R + r] += dz2[c] * h;
          dz1[r] += params.se_expand[c * R + r] * dz2[c];
        }
      }
      for (std::size_t r = 0; r < R; ++r) {
        if (!(s.reduced[b * R + r] > 0.0)) dz1[r] = 0.0;
        g.se_reduce_bias[r] += dz1[r];
      }
      for (std::size_t c = 0; c < C; ++c) {
        double ds = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
          g.se_reduce[r * C + c] += dz1[r] * s.pooled[b * C + c];
          ds += params.se_reduce[r * C + c] * dz1[r];
        }
        const double share = ds / static_cast<double>(S);
        for (std::size_t i = (b * C + c) * S; i < (b * C + c + 1) * S; ++i) g.input[i] += share;
      }
    }
  }

  if (!s.hooks.force_local) {
    auto bn_grads = batchnorm_backward(d_local_pre, s.bn, params.bn);
    g.bn_gamma = std::move(bn_grads.gamma);
    g.bn_beta = std::move(bn_grads.beta);
    auto conv_grads = conv2d_backward(bn_grads.input, s.conv, params.volterra);
    g.volterra = std::move(conv_grads.kernels);
    Tensor dx_local = std::move(conv_grads.input);
    if (params.input_bn) {
      auto ib = batchnorm_backward(dx_local, *s.input_bn, *params.input_bn);
      g.input_bn_gamma = std::move(ib.gamma);
      g.input_bn_beta = std::move(ib.beta);
      dx_local = std::move(ib.input);
    }
    for (std::size_t i = 0; i < g.input.size(); ++i) g.input[i] += dx_local[i];
  }
  return g;
}

void commit_running_stats(HlaParams& params, const HlaSaved& saved) {
  if (saved.mode != Mode::Train || saved.hooks.force_local) return;
  commit_running_stats(params.bn, saved.bn);
  if (params.input_bn && saved.input_bn) commit_running_stats(*params.input_bn, *saved.input_bn);
}

std::vector<ParamRef> param_refs(HlaParams& p, HlaGradients& g) {
  std::vector<ParamRef> refs{
      {"hla.se_reduce.weight", p.se_reduce.data(), g.se_reduce.data()},
      {"hla.se_reduce.bias", p.se_reduce_bias, g.se_reduce_bias},
      {"hla.se_expand.weight", p.se_expand.data(), g.se_expand.data()},
      {"hla.se_expand.bias", p.se_expand_bias, g.se_expand_bias},
  };
  append_kernel_refs(refs, "hla.volterra", p.volterra.kernels, g.volterra);
  refs.push_back({"hla.bn.gamma", p.bn.gamma, g.bn_gamma});
  refs.push_back({"hla.bn.beta", p.bn.beta, g.bn_beta});
  if (p.input_bn) {
    refs.push_back({"hla.input_bn.gamma", p.input_bn->gamma, g.input_bn_gamma});
    refs.push_back({"hla.input_bn.beta", p.input_bn->beta, g.input_bn_beta});
  }
  return refs;
}

namespace {

void write_bn(std::ostream& out, const BatchNorm2d& bn) {
  io::write_f64s(out, bn.gamma);
  io::write_f64s(out, bn.beta);
  io::write_f64s(out, bn.running_mean);
  io::write_f64s(out, bn.running_var);
}

void read_bn(std::istream& in, BatchNorm2d& bn) {
  io::read_f64s(in, bn.gamma);
  io::read_f64s(in, bn.beta);
  io::read_f64s(in, bn.running_mean);
  io::read_f64s(in, bn.running_var);
}

}  // namespace

void write_hla(std::ostream& out, const HlaParams& p) {
  write_kernels(out, p.volterra.kernels);
  io::write_magic(out, "HLA1");
  io::write_u32(out, static_cast<std::uint32_t>(p.config.channels));
  io::write_u32(out, static_cast<std::uint32_t>(p.config.reduction_ratio));
  io::write_u32(out, p.input_bn ? 1u : 0u);
  io::write_f64s(out, p.se_reduce.data());
  io::write_f64s(out, p.se_reduce_bias);
  io::write_f64s(out, p.se_expand.data());
  io::write_f64s(out, p.se_expand_bias);
  write_bn(out, p.bn);
  if (p.input_bn) write_bn(out, *p.input_bn);
  if (!out) throw std::runtime_error("write_hla: stream write failed");
}

HlaParams read_hla(std::istream& in, int height, int width) {
  auto kernels = read_kernels(in);
  io::expect_magic(in, "HLA1");
  HlaConfig config;
  config.channels = static_cast<int>(io::read_u32(in));
  config.reduction_ratio = static_cast<int>(io::read_u32(in));
  config.use_input_batchnorm = io::read_u32(in) != 0;
  HlaParams p = zero_hla(config, height, width);
  if (kernels.size() != p.volterra.kernels.size() || kernels.front().n != p.volterra.n() ||
      kernels.front().order != 2) {
    throw FormatError("HLA section does not match the preceding kernel container");
  }
  p.volterra.kernels = std::move(kernels);
  io::read_f64s(in, p.se_reduce.data());
  io::read_f64s(in, p.se_reduce_bias);
  io::read_f64s(in, p.se_expand.data());
  io::read_f64s(in, p.se_expand_bias);
  read_bn(in, p.bn);
  if (p.input_bn) read_bn(in, *p.input_bn);
  return p;
}

}  // namespace evc
