#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace odis {

using Field = std::vector<double>;    // one component sampled over the space grid
using VecField = std::vector<Field>;  // [component][space point]

/// Raised when a solve cannot proceed (singular closure, divergence, ...).
/// `context` carries run diagnostics for the CLI layer.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what, std::string context = {})
      : std::runtime_error(what), context_(std::move(context)) {}
  const std::string& context() const noexcept { return context_; }

 private:
  std::string context_;
};

/// Overdetermination system degenerate (determinant below threshold).
class DegeneracyError : public SolverError {
 public:
  using SolverError::SolverError;
};

inline bool all_finite(const Field& f) {
  for (double v : f) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace odis
