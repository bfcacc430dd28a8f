#pragma once

#include <stdexcept>
#include <string>

namespace spongelab {

// Error taxonomy. The CLI maps each kind onto a process exit code.

/// Bad shapes, out-of-range arguments, malformed input data.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced by a numeric kernel.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kIo = 3,
  kNumerical = 4,
};

}  // namespace spongelab
