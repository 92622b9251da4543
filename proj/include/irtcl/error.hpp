#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace irtcl {

/// Bad input: malformed files, violated preconditions, inconsistent configs.
/// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while doing otherwise valid work (I/O, numerical breakdown).
/// The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite objective during an iterative fit.
class DivergenceError : public RuntimeError {
public:
  DivergenceError(const std::string& what, std::size_t step)
      : RuntimeError(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace irtcl
