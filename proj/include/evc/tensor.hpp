#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace evc {

/// Dense row-major float64 array. Every dimension is >= 1 and the buffer
/// always holds exactly product(shape) elements.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 4D access for [batch, channel, row, col] tensors.
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape; the element count must not change.
  Tensor reshaped(std::vector<std::size_t> shape) const;
  void fill(double value);

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Kernel/stride/padding plus the input extent it is applied to.
struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;

  int out_h() const { return (in_h + 2 * pad_h - kernel_h) / stride_h + 1; }
  int out_w() const { return (in_w + 2 * pad_w - kernel_w) / stride_w + 1; }
  int patch_len() const { return in_channels * kernel_h * kernel_w; }

  /// Throws std::invalid_argument if any field is out of range or the output
  /// would be empty.
  void validate() const;
};

bool operator==(const ConvGeometry& a, const ConvGeometry& b);

/// One row per receptive field: rows are ordered batch, output row, output
/// column; within a row, channel, kernel row, kernel column.
struct PatchMatrix {
  std::size_t n_patches = 0;
  std::size_t patch_len = 0;
  std::vector<double> data;
  ConvGeometry geometry;

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * patch_len, patch_len};
  }
  std::span<double> row(std::size_t i) { return {data.data() + i * patch_len, patch_len}; }
};

PatchMatrix im2col(const Tensor& input, const ConvGeometry& geom);

/// Adjoint of im2col: every input pixel receives the sum of the patch
/// entries that read it. Entries that fell on padding are dropped.
Tensor col2im_accumulate(const PatchMatrix& patch_grads, const ConvGeometry& geom,
                         std::size_t batch);

}  // namespace evc
