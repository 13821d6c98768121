#include "evc/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace evc {
namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
  std::size_t count = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be >= 1");
    count *= d;
  }
  return count;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) out << (i ? "x" : "") << shape_[i];
  out << ']';
  return out.str();
}

void ConvGeometry::validate() const {
  if (kernel_h < 1 || kernel_w < 1) throw std::invalid_argument("kernel size must be positive");
  if (stride_h < 1 || stride_w < 1) throw std::invalid_argument("stride must be positive");
  if (pad_h < 0 || pad_w < 0) throw std::invalid_argument("padding must be non-negative");
  if (in_channels < 1 || in_h < 1 || in_w < 1) {
    throw std::invalid_argument("input extent must be positive");
  }
  if (in_h + 2 * pad_h < kernel_h || in_w + 2 * pad_w < kernel_w) {
    throw std::invalid_argument("kernel larger than padded input");
  }
}

bool operator==(const ConvGeometry& a, const ConvGeometry& b) {
  return a.kernel_h == b.kernel_h && a.kernel_w == b.kernel_w && a.stride_h == b.stride_h &&
         a.stride_w == b.stride_w && a.pad_h == b.pad_h && a.pad_w == b.pad_w &&
         a.in_channels == b.in_channels && a.in_h == b.in_h && a.in_w == b.in_w;
}

PatchMatrix im2col(const Tensor& input, const ConvGeometry& geom) {
  geom.validate();
  if (input.rank() != 4 || input.dim(1) != static_cast<std::size_t>(geom.in_channels) ||
      input.dim(2) != static_cast<std::size_t>(geom.in_h) ||
      input.dim(3) != static_cast<std::size_t>(geom.in_w)) {
    throw std::invalid_argument("im2col: input " + input.shape_string() +
                                " does not match geometry");
  }
  const std::size_t batch = input.dim(0);
  const int oh = geom.out_h();
  const int ow = geom.out_w();

  PatchMatrix out;
  out.geometry = geom;
  out.patch_len = static_cast<std::size_t>(geom.patch_len());
  out.n_patches = batch * static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow);
  out.data.assign(out.n_patches * out.patch_len, 0.0);

  std::size_t p = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++p) {
        double* dst = out.data.data() + p * out.patch_len;
        for (int c = 0; c < geom.in_channels; ++c) {
          for (int ky = 0; ky < geom.kernel_h; ++ky) {
            const int iy = oy * geom.stride_h - geom.pad_h + ky;
            for (int kx = 0; kx < geom.kernel_w; ++kx, ++dst) {
              const int ix = ox * geom.stride_w - geom.pad_w + kx;
              if (iy >= 0 && iy < geom.in_h && ix >= 0 && ix < geom.in_w) {
                *dst = input.at(b, c, iy, ix);
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor col2im_accumulate(const PatchMatrix& patch_grads, const ConvGeometry& geom,
                         std::size_t batch) {
  geom.validate();
  const int oh = geom.out_h();
  const int ow = geom.out_w();
  const std::size_t expected = batch * static_cast<std::size_t>(oh) * static_cast<std::size_t>(ow);
  if (batch == 0 || patch_grads.n_patches != expected) {
    throw std::invalid_argument("col2im: " + std::to_string(patch_grads.n_patches) +
                                " patches, expected " + std::to_string(expected));
  }
  if (patch_grads.patch_len != static_cast<std::size_t>(geom.patch_len()) ||
      patch_grads.data.size() != patch_grads.n_patches * patch_grads.patch_len) {
    throw std::invalid_argument("col2im: patch length does not match geometry");
  }

  Tensor out({batch, static_cast<std::size_t>(geom.in_channels),
              static_cast<std::size_t>(geom.in_h), static_cast<std::size_t>(geom.in_w)});
  // Patches are visited in row order, so each pixel accumulates in a fixed order.
  std::size_t p = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++p) {
        const double* src = patch_grads.data.data() + p * patch_grads.patch_len;
        for (int c = 0; c < geom.in_channels; ++c) {
          for (int ky = 0; ky < geom.kernel_h; ++ky) {
            const int iy = oy * geom.stride_h - geom.pad_h + ky;
            for (int kx = 0; kx < geom.kernel_w; ++kx, ++src) {
              const int ix = ox * geom.stride_w - geom.pad_w + kx;
              if (iy >= 0 && iy < geom.in_h && ix >= 0 && ix < geom.in_w) {
                out.at(b, c, iy, ix) += *src;
              }
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace evc
