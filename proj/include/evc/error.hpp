#pragma once

#include <stdexcept>
#include <string>

namespace evc {

// Argument validation failures use std::invalid_argument and integer
// overflow uses std::overflow_error. The types below cover the remaining
// failure classes that callers (notably the CLI) need to tell apart.

/// A requested structure would exceed the configured element budget.
class ResourceLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An index structure violated one of its own construction invariants.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed on-disk data (dataset files, kernel containers, configs).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evc
