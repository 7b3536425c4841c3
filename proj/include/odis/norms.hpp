#pragma once

#include <span>

#include "odis/grid.hpp"
#include "odis/trajectory.hpp"

namespace odis {

/// Scalar time series sampled at t_m = m*dt, m = 0..Nt.
struct TimeSeries {
  std::vector<double> v;
  double dt = 0.0;

  static TimeSeries zeros(const Grid& g) { return {std::vector<double>(g.steps(), 0.0), g.dt()}; }
  int size() const { return static_cast<int>(v.size()); }
  double T() const { return dt * (v.empty() ? 0 : v.size() - 1); }
};

/// Solution-space norm split: sup-in-time spatial L2 plus space-time L2 of
/// the l-th spatial derivative, summed over components.
struct XNormReport {
  double sup_l2 = 0.0;
  double dxl_l2 = 0.0;
  double total = 0.0;
};

/// Composite-trapezoid L2(0,R) norm of a sampled field.
double l2_norm(std::span<const double> field, const Grid& g);

/// Trapezoid quadrature of a sampled field over (0,R).
double integrate(std::span<const double> field, const Grid& g);

XNormReport x_norm(const Trajectory& traj, int l);

/// Difference trajectory norm helper (same grids assumed).
XNormReport x_norm_diff(const Trajectory& a, const Trajectory& b, int l);

/// Fractional Sobolev norm on (0,T): L2 part plus discrete Gagliardo
/// double-sum seminorm. s=0 reduces to the plain L2(0,T) norm.
/// The double sum is O(Nt^2); series longer than `gagliardo_cap` are
/// subsampled to the cap before summing.
double frac_sobolev_norm(const TimeSeries& series, double s);

inline constexpr int gagliardo_cap = 4096;

/// Boundary-trace norm: sum over j of the H^{(l-j)/(2l+1)}(0,T) norms of
/// mu_j (j=0..l-1) and nu_j (j=0..l), summed over components.
/// mu[j][i], nu[j][i].
double boundary_norm(const std::vector<std::vector<TimeSeries>>& mu,
                     const std::vector<std::vector<TimeSeries>>& nu, int l);

/// L1(0,T) norm with weight e^{-gamma t}.
double weighted_l1(const TimeSeries& series, double gamma);

/// Plain L1(0,T) norm.
inline double l1_norm(const TimeSeries& series) { return weighted_l1(series, 0.0); }

/// L2(0,T) norm of a time series (trapezoid).
double l2_time(const TimeSeries& series);

/// L1(0,T; L2(0,R)) norm of a time-major field series.
double l1_l2_norm(const std::vector<VecField>& f, const Grid& g);

}  // namespace odis
