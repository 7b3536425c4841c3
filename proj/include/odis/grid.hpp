#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "odis/common.hpp"

namespace odis {

/// Uniform space-time grid over Q_T = (0,T) x (0,R).
/// Space points are x_k = k*dx, k = 0..Nx+1 (boundaries included, Nx interior
/// points); time levels are t_m = m*dt, m = 0..Nt.
struct Grid {
  double R = 1.0;  // interval length
  double T = 1.0;  // time horizon
  int Nx = 0;      // interior point count
  int Nt = 0;      // time step count

  double dx() const { return R / (Nx + 1); }
  double dt() const { return T / Nt; }
  int points() const { return Nx + 2; }  // space points including boundaries
  int steps() const { return Nt + 1; }   // time levels including t=0
  double x(int k) const { return k * dx(); }
  double t(int m) const { return m * dt(); }

  /// Stencils for derivatives up to order 2l+1 must fit: Nx >= 4l+2.
  std::optional<std::string> check(int l) const {
    if (R <= 0.0 || T <= 0.0) return "grid: R and T must be positive";
    if (Nt < 1) return "grid: Nt must be at least 1";
    if (Nx < 4 * l + 2)
      return "grid: Nx = " + std::to_string(Nx) + " too coarse for order " +
             std::to_string(2 * l + 1) + " stencils (need Nx >= " +
             std::to_string(4 * l + 2) + ")";
    return std::nullopt;
  }
};

}  // namespace odis
