#pragma once

#include <span>
#include <vector>

#include "odis/grid.hpp"

namespace odis {

/// Finite-difference weights (Fornberg) for the m-th derivative at x0 over
/// the given nodes. Exact for polynomials of degree <= nodes.size()-1.
std::vector<double> fd_weights(double x0, std::span<const double> xs, int m);

/// One row of a derivative operator: weights apply to points
/// start .. start+weights.size()-1.
struct StencilRow {
  int start = 0;
  std::vector<double> w;
};

/// Second-order-accurate stencil of the d-th derivative at grid point k.
/// Interior points get centered windows; near the boundary the window is
/// shifted inside (width d+2, still order >= 2).
StencilRow derivative_stencil(const Grid& g, int d, int k);

/// Stencil table for every grid point.
std::vector<StencilRow> derivative_stencils(const Grid& g, int d);

/// One-sided stencil evaluating the d-th derivative exactly at x=0 or x=R
/// using `width` points from that end. Width >= d+1; order = width - d.
StencilRow boundary_stencil(const Grid& g, int d, bool at_right, int width);

/// Apply a stencil row to a sampled field.
double apply_stencil(const StencilRow& s, std::span<const double> f);

/// d-th derivative of a sampled field at every grid point.
Field differentiate(const Grid& g, std::span<const double> f, int d);

}  // namespace odis
