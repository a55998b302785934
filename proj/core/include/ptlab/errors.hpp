#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ptlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy a primitive's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain of an operation (log of a nonpositive
/// number, normalizing a zero vector, non-finite results, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation graph, e.g. differentiating a detached loss.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid sizes or settings in a configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed PTES container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Mixup requested on samples that do not come from distinct classes.
class PairingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; carries the optimizer step at which it happened.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ptlab
