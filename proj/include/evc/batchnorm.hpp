#pragma once

#include <vector>

#include "evc/tensor.hpp"

namespace evc {

enum class Mode { Train, Inference };

/// Per-channel batch normalisation over [batch, channel, h, w] tensors.
/// Train mode normalises with batch statistics (biased variance); running
/// statistics track the unbiased variance, PyTorch style.
struct BatchNorm2d {
  int channels = 0;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  /// gamma = 1, beta = 0, running mean 0 and variance 1.
  static BatchNorm2d identity(int channels);
};

struct BatchNormSaved {
  Mode mode = Mode::Train;
  Tensor normalized;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var_unbiased;
};

struct BatchNormForward {
  Tensor output;
  BatchNormSaved saved;
};

struct BatchNormGradients {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

BatchNormForward batchnorm_forward(const Tensor& x, const BatchNorm2d& bn, Mode mode);
BatchNormGradients batchnorm_backward(const Tensor& upstream, const BatchNormSaved& saved,
                                      const BatchNorm2d& bn);

/// Folds the batch statistics of a train-mode forward into the running ones.
void commit_running_stats(BatchNorm2d& bn, const BatchNormSaved& saved);

}  // namespace evc
