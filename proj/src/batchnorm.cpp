#include "evc/batchnorm.hpp"

#include <cmath>
#include <stdexcept>

namespace evc {
namespace {

void check(const Tensor& x, const BatchNorm2d& bn) {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(bn.channels)) {
    throw std::invalid_argument("batch norm over " + std::to_string(bn.channels) +
                                " channels cannot take " + x.shape_string());
  }
}

}  // namespace

BatchNorm2d BatchNorm2d::identity(int channels) {
  if (channels < 1) throw std::invalid_argument("batch norm needs >= 1 channel");
  const auto c = static_cast<std::size_t>(channels);
  return {channels, std::vector<double>(c, 1.0), std::vector<double>(c, 0.0),
          std::vector<double>(c, 0.0), std::vector<double>(c, 1.0)};
}

BatchNormForward batchnorm_forward(const Tensor& x, const BatchNorm2d& bn, Mode mode) {
  check(x, bn);
  const std::size_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(B * S);
  BatchNormForward f{Tensor(x.shape()), {mode, Tensor(x.shape()), std::vector<double>(C),
                                         std::vector<double>(C), std::vector<double>(C)}};
  const auto in = x.data();
  auto xhat = f.saved.normalized.data();
  auto out = f.output.data();
  for (std::size_t c = 0; c < C; ++c) {
    double mean = bn.running_mean[c];
    double var = bn.running_var[c];
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t s = 0; s < S; ++s) sum += in[(b * C + c) * S + s];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t s = 0; s < S; ++s) {
          const double d = in[(b * C + c) * S + s] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      f.saved.batch_mean[c] = mean;
      f.saved.batch_var_unbiased[c] = count > 1.0 ? sq / (count - 1.0) : 0.0;
    }
    const double inv_std = 1.0 / std::sqrt(var + bn.eps);
    f.saved.inv_std[c] = inv_std;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (b * C + c) * S + s;
        xhat[i] = (in[i] - mean) * inv_std;
        out[i] = bn.gamma[c] * xhat[i] + bn.beta[c];
      }
    }
  }
  return f;
}

BatchNormGradients batchnorm_backward(const Tensor& upstream, const BatchNormSaved& saved,
                                      const BatchNorm2d& bn) {
  check(upstream, bn);
  if (upstream.shape() != saved.normalized.shape()) {
    throw std::invalid_argument("batch norm backward: upstream shape does not match forward");
  }
  const std::size_t B = upstream.dim(0), C = upstream.dim(1), S = upstream.dim(2) * upstream.dim(3);
  const double count = static_cast<double>(B * S);
  BatchNormGradients g{Tensor(upstream.shape()), std::vector<double>(C, 0.0),
                       std::vector<double>(C, 0.0)};
  const auto dy = upstream.data();
  const auto xhat = saved.normalized.data();
  auto dx = g.input.data();
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (b * C + c) * S + s;
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xhat[i];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xhat;
    const double scale = bn.gamma[c] * saved.inv_std[c];
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (b * C + c) * S + s;
        dx[i] = saved.mode == Mode::Train
                    ? scale * (dy[i] - sum_dy / count - xhat[i] * sum_dy_xhat / count)
                    : scale * dy[i];
      }
    }
  }
  return g;
}

void commit_running_stats(BatchNorm2d& bn, const BatchNormSaved& saved) {
  if (saved.mode != Mode::Train) return;
  for (std::size_t c = 0; c < static_cast<std::size_t>(bn.channels); ++c) {
    bn.running_mean[c] = (1.0 - bn.momentum) * bn.running_mean[c] + bn.momentum * saved.batch_mean[c];
    bn.running_var[c] =
        (1.0 - bn.momentum) * bn.running_var[c] + bn.momentum * saved.batch_var_unbiased[c];
  }
}

}  // namespace evc
