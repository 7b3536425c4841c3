#include "odis/norms.hpp"

#include <cmath>

#include "odis/stencils.hpp"

namespace odis {

double integrate(std::span<const double> field, const Grid& g) {
  const int P = g.points();
  double acc = 0.5 * (field[0] + field[P - 1]);
  for (int k = 1; k < P - 1; ++k) acc += field[k];
  return acc * g.dx();
}

double l2_norm(std::span<const double> field, const Grid& g) {
  const int P = g.points();
  double acc = 0.5 * (field[0] * field[0] + field[P - 1] * field[P - 1]);
  for (int k = 1; k < P - 1; ++k) acc += field[k] * field[k];
  return std::sqrt(acc * g.dx());
}

XNormReport x_norm(const Trajectory& traj, int l) {
  const Grid& g = traj.grid;
  XNormReport rep;
  auto stencils = derivative_stencils(g, l);
  for (int i = 0; i < traj.n; ++i) {
    double sup = 0.0;
    double acc_t = 0.0;
    for (int m = 0; m < g.steps(); ++m) {
      const Field& row = traj.at(m, i);
      sup = std::max(sup, l2_norm(row, g));
      double acc_x = 0.0;
      for (int k = 0; k < g.points(); ++k) {
        double d = apply_stencil(stencils[k], row);
        double w = (k == 0 || k == g.points() - 1) ? 0.5 : 1.0;
        acc_x += w * d * d;
      }
      double wt = (m == 0 || m == g.steps() - 1) ? 0.5 : 1.0;
      acc_t += wt * acc_x * g.dx();
    }
    rep.sup_l2 += sup;
    rep.dxl_l2 += std::sqrt(acc_t * g.dt());
  }
  rep.total = rep.sup_l2 + rep.dxl_l2;
  return rep;
}

XNormReport x_norm_diff(const Trajectory& a, const Trajectory& b, int l) {
  Trajectory d = a;
  for (int m = 0; m < d.grid.steps(); ++m)
    for (int i = 0; i < d.n; ++i)
      for (int k = 0; k < d.grid.points(); ++k) d.u[m][i][k] -= b.u[m][i][k];
  return x_norm(d, l);
}

namespace {

TimeSeries subsample(const TimeSeries& s, int cap) {
  if (s.size() <= cap) return s;
  int stride = (s.size() + cap - 1) / cap;
  TimeSeries out;
  out.dt = s.dt * stride;
  for (int m = 0; m < s.size(); m += stride) out.v.push_back(s.v[m]);
  return out;
}

}  // namespace

double l2_time(const TimeSeries& s) {
  const int n = s.size();
  if (n < 2) return 0.0;
  double acc = 0.5 * (s.v[0] * s.v[0] + s.v[n - 1] * s.v[n - 1]);
  for (int m = 1; m < n - 1; ++m) acc += s.v[m] * s.v[m];
  return std::sqrt(acc * s.dt);
}

double frac_sobolev_norm(const TimeSeries& series, double s) {
  if (s < 0.0 || s >= 1.0)
    throw SolverError("frac_sobolev_norm: order s must lie in [0,1)");
  double l2 = l2_time(series);
  if (s == 0.0) return l2;
  TimeSeries f = subsample(series, gagliardo_cap);
  const int n = f.size();
  double semi2 = 0.0;
  for (int m = 0; m < n; ++m) {
    for (int p = m + 1; p < n; ++p) {
      double df = f.v[m] - f.v[p];
      double dtau = (p - m) * f.dt;
      semi2 += 2.0 * df * df / std::pow(dtau, 1.0 + 2.0 * s);
    }
  }
  semi2 *= f.dt * f.dt;
  return std::sqrt(l2 * l2 + semi2);
}

double boundary_norm(const std::vector<std::vector<TimeSeries>>& mu,
                     const std::vector<std::vector<TimeSeries>>& nu, int l) {
  if (static_cast<int>(mu.size()) != l || static_cast<int>(nu.size()) != l + 1)
    throw SolverError("boundary_norm: expected l mu entries and l+1 nu entries");
  double acc = 0.0;
  for (int j = 0; j < l; ++j) {
    double s = static_cast<double>(l - j) / (2 * l + 1);
    for (const auto& comp : mu[j]) acc += frac_sobolev_norm(comp, s);
  }
  for (int j = 0; j <= l; ++j) {
    double s = static_cast<double>(l - j) / (2 * l + 1);
    for (const auto& comp : nu[j]) acc += frac_sobolev_norm(comp, s);
  }
  return acc;
}

double weighted_l1(const TimeSeries& series, double gamma) {
  if (gamma < 0.0) throw SolverError("weighted_l1: gamma must be nonnegative");
  const int n = series.size();
  if (n < 2) return 0.0;
  double acc = 0.0;
  for (int m = 0; m < n; ++m) {
    double w = (m == 0 || m == n - 1) ? 0.5 : 1.0;
    acc += w * std::exp(-gamma * m * series.dt) * std::abs(series.v[m]);
  }
  return acc * series.dt;
}

double l1_l2_norm(const std::vector<VecField>& f, const Grid& g) {
  double acc = 0.0;
  for (int m = 0; m < static_cast<int>(f.size()); ++m) {
    double sp = 0.0;
    for (const auto& comp : f[m]) sp += l2_norm(comp, g);
    double w = (m == 0 || m == static_cast<int>(f.size()) - 1) ? 0.5 : 1.0;
    acc += w * sp;
  }
  return acc * g.dt();
}

}  // namespace odis
