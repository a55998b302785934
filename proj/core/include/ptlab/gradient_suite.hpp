#pragma once

#include <cstddef>
#include <cstdint>

namespace ptlab {

inline constexpr double kSuiteEps = 1e-6;
inline constexpr double kSingleLossTolerance = 1e-5;
inline constexpr double kTotalLossTolerance = 1e-4;

/// Largest relative finite-difference error seen per loss.
struct GradientSuiteResult {
  std::size_t trials = 0;
  double ce = 0.0;     // w.r.t. the context
  double kl = 0.0;     // w.r.t. the context
  double kg = 0.0;     // w.r.t. the context
  double total = 0.0;  // w.r.t. the context and every estimator weight

  double max_error() const;
  bool passed() const;
};

/// Random small instances (C <= 5, d <= 16, batch <= 8), one per trial,
/// each drawn from its own stream derived from `seed`.
GradientSuiteResult run_gradient_suite(std::uint64_t seed, std::size_t trials);

}  // namespace ptlab
