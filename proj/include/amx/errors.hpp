#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace amx {

// Invalid argument supplied to an operation (out-of-range family parameter,
// empty input set, mismatched lengths).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file does not match its declared format. `offset` is the byte offset (or
// line number for text formats) at which the problem was detected.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Operation invoked on an object that is not in the required state, e.g. an
// uncalibrated model or an integer accumulator that would overflow.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Graph or pipeline configuration is inconsistent (cycles, missing alpha, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A statistical estimate could not be produced (zero variance, no valid
// samples, non-converged training).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace amx
