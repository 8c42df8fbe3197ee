#pragma once

#include <stdexcept>
#include <string>

namespace faceswap {

/// Precondition or input-format failure. The CLI maps it to exit status 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical or runtime failure (singular systems, NaN losses, I/O faults).
/// The CLI maps it to exit status 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace faceswap
