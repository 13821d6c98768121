#pragma once

#include <span>
#include <string>
#include <vector>

#include "evc/kernels.hpp"

namespace evc {

/// A trainable tensor viewed as a flat value buffer plus its gradient buffer.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
};

/// Appends one ref per order weight vector and one for each bias.
void append_kernel_refs(std::vector<ParamRef>& refs, const std::string& prefix,
                        std::vector<UniqueKernel>& values, std::vector<UniqueKernel>& grads);

}  // namespace evc
