#pragma once

#include <stdexcept>
#include <string>

namespace repsim {

/// Input violates a documented contract (bad shape, misaligned variants,
/// degenerate data, out-of-range parameter). Maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read, decoded or written. Maps to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace repsim
