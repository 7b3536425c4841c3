#include "odis/functionals.hpp"

#include <algorithm>
#include <cmath>

namespace odis {

namespace {

double trapz_product(std::span<const double> a, std::span<const double> b,
                     const Grid& g) {
  const int P = g.points();
  double acc = 0.5 * (a[0] * b[0] + a[P - 1] * b[P - 1]);
  for (int k = 1; k < P - 1; ++k) acc += a[k] * b[k];
  return acc * g.dx();
}

// Dense LU determinant with partial pivoting (row-major, in copy).
double det_lu(std::span<const double> a, int m) {
  std::vector<double> w(a.begin(), a.end());
  double det = 1.0;
  for (int c = 0; c < m; ++c) {
    int piv = c;
    double best = std::abs(w[c * m + c]);
    for (int r = c + 1; r < m; ++r) {
      double v = std::abs(w[r * m + c]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best == 0.0) return 0.0;
    if (piv != c) {
      for (int q = 0; q < m; ++q) std::swap(w[c * m + q], w[piv * m + q]);
      det = -det;
    }
    det *= w[c * m + c];
    for (int r = c + 1; r < m; ++r) {
      double f = w[r * m + c] / w[c * m + c];
      for (int q = c; q < m; ++q) w[r * m + q] -= f * w[c * m + q];
    }
  }
  return det;
}

}  // namespace

double dense_det(std::span<const double> a, int m) {
  switch (m) {
    case 1: return a[0];
    case 2: return a[0] * a[3] - a[1] * a[2];
    case 3:
      return a[0] * (a[4] * a[8] - a[5] * a[7]) -
             a[1] * (a[3] * a[8] - a[5] * a[6]) +
             a[2] * (a[3] * a[7] - a[4] * a[6]);
    default: return det_lu(a, m);
  }
}

double PsiMatrix::threshold(double psi0, int m) {
  return std::max(1e-12, 1e-6 * std::pow(psi0, m));
}

PsiMatrix psi_matrix(const ProblemData& data, const Grid& g) {
  PsiMatrix out;
  out.delta_min = std::numeric_limits<double>::infinity();
  for (const auto& grp : data.groups) {
    PsiMatrix::Block blk;
    blk.comp = grp.comp;
    blk.m = grp.m();
    blk.mats.resize(g.steps());
    blk.det.resize(g.steps());
    std::vector<Field> omega_fields;
    for (int k = 0; k < blk.m; ++k)
      omega_fields.push_back(grp.omega[k].deriv_field(g, 0));
    for (int s = 0; s < g.steps(); ++s) {
      std::vector<double> mat(static_cast<size_t>(blk.m) * blk.m);
      for (int k = 0; k < blk.m; ++k)
        for (int j = 0; j < blk.m; ++j) {
          double v = trapz_product(grp.h[j][s], omega_fields[k], g);
          mat[k * blk.m + j] = v;
          out.psi0 = std::max(out.psi0, std::abs(v));
        }
      blk.det[s] = dense_det(mat, blk.m);
      out.delta_min = std::min(out.delta_min, std::abs(blk.det[s]));
      blk.mats[s] = std::move(mat);
    }
    out.blocks.push_back(std::move(blk));
  }
  for (const auto& blk : out.blocks) {
    double thr = PsiMatrix::threshold(out.psi0, blk.m);
    for (int s = 0; s < g.steps(); ++s)
      if (std::abs(blk.det[s]) < thr)
        throw DegeneracyError(
            "overdetermination system degenerate at t = " + std::to_string(g.t(s)) +
            " (component " + std::to_string(blk.comp + 1) + ", |Delta| = " +
            std::to_string(std::abs(blk.det[s])) + " < " + std::to_string(thr) + ")");
  }
  return out;
}

double q_at(const VecField& u_row, int comp, std::span<const double> omega_field,
            const Grid& g) {
  return trapz_product(u_row[comp], omega_field, g);
}

TimeSeries q_functional(const Trajectory& traj, int comp, const Weight& omega,
                        const Grid& g) {
  Field om = omega.deriv_field(g, 0);
  TimeSeries out;
  out.dt = g.dt();
  out.v.resize(g.steps());
  for (int m = 0; m < g.steps(); ++m) out.v[m] = q_at(traj.u[m], comp, om, g);
  return out;
}

// ---- RFunctional ----

RFunctional::RFunctional(const SystemSpec& spec, int comp, const Weight& omega,
                         const Grid& g)
    : spec_(&spec), comp_(comp), g_(g) {
  const int l = spec.l;
  if (!omega.is_analytic() && l > 1)
    throw SolverError(
        "sampled weights are supported for l = 1 only; derivative order " +
        std::to_string(2 * l + 1) + " differentiation of samples is unreliable");

  omega_d_.resize(2 * l + 2);
  om0_.resize(2 * l + 2);
  omR_.resize(2 * l + 2);
  for (int d = 0; d <= 2 * l + 1; ++d) {
    omega_d_[d] = omega.deriv_field(g, d);
    om0_[d] = omega.deriv_at(0.0, d, g);
    omR_[d] = omega.deriv_at(g.R, d, g);
  }

  const double sgn = ((l + 1) % 2 == 0) ? 1.0 : -1.0;
  kernel_top_.resize(g.points());
  for (int k = 0; k < g.points(); ++k)
    kernel_top_[k] = sgn * (spec.a_top[comp] * omega_d_[2 * l + 1][k] -
                            spec.a_sub[comp] * omega_d_[2 * l][k]);

  if (!spec.lower_all_zero()) {
    lower_static_ = !spec.time_varying();
    bool analytic = omega.is_analytic();
    for (const auto& row : spec.lower)
      for (const auto& c : row) analytic = analytic && c.is_analytic();
    if (lower_static_) {
      kernel_low_.resize(spec.n);
      for (int m = 0; m < spec.n; ++m) kernel_low_[m] = lower_kernel(m, 0.0);
    }
  }
}

Field RFunctional::lower_kernel(int m_col, double t) const {
  // sum_j (-1)^{j+1} [ (a_{2j+1,im} omega^{(j)})^{(j+1)} -
  //                    (a_{2j,im} omega^{(j)})^{(j)} ]
  const SystemSpec& spec = *spec_;
  const int l = spec.l;
  Field out(g_.points(), 0.0);
  Field prod(g_.points());
  for (int j = 0; j < l; ++j) {
    const double sgn = ((j + 1) % 2 == 0) ? 1.0 : -1.0;
    const CoeffField& c1 = spec.coeff(2 * j + 1, comp_, m_col);
    if (!c1.is_zero()) {
      for (int k = 0; k < g_.points(); ++k)
        prod[k] = c1.eval(t, g_.x(k)) * omega_d_[j][k];
      Field d = differentiate(g_, prod, j + 1);
      for (int k = 0; k < g_.points(); ++k) out[k] += sgn * d[k];
    }
    const CoeffField& c0 = spec.coeff(2 * j, comp_, m_col);
    if (!c0.is_zero()) {
      for (int k = 0; k < g_.points(); ++k)
        prod[k] = c0.eval(t, g_.x(k)) * omega_d_[j][k];
      Field d = j == 0 ? prod : differentiate(g_, prod, j);
      for (int k = 0; k < g_.points(); ++k) out[k] -= sgn * d[k];
    }
  }
  return out;
}

double RFunctional::lower_boundary_coeff(int m_col, int j, int k, bool at_right,
                                         double t) const {
  // (a_{2j+1,im} omega^{(j)})^{(j-k)} - (a_{2j,im} omega^{(j)})^{(j-k-1)}
  // evaluated at an endpoint, via the Leibniz rule on coefficient
  // x-derivatives (finite differences when the coefficient is sampled).
  const SystemSpec& spec = *spec_;
  const double x = at_right ? g_.R : 0.0;
  const auto& om_end = at_right ? omR_ : om0_;
  auto binom = [](int nn, int kk) {
    double b = 1.0;
    for (int q = 0; q < kk; ++q) b = b * (nn - q) / (q + 1);
    return b;
  };
  auto prod_deriv = [&](const CoeffField& c, int p) {
    if (c.is_zero()) return 0.0;
    double acc = 0.0;
    for (int q = 0; q <= p; ++q)
      acc += binom(p, q) * c.eval_dx(t, x, q) * om_end[j + p - q];
    return acc;
  };
  double v = prod_deriv(spec.coeff(2 * j + 1, comp_, m_col), j - k);
  v -= prod_deriv(spec.coeff(2 * j, comp_, m_col), j - k - 1);
  return v;
}

double RFunctional::interior(double t, const VecField& u_row) const {
  double acc = trapz_product(u_row[comp_], kernel_top_, g_);
  if (!spec_->lower_all_zero()) {
    for (int m = 0; m < spec_->n; ++m) {
      if (lower_static_) {
        acc += trapz_product(u_row[m], kernel_low_[m], g_);
      } else {
        Field ker = lower_kernel(m, t);
        acc += trapz_product(u_row[m], ker, g_);
      }
    }
  }
  return acc;
}

double RFunctional::boundary(int m,
                             const std::vector<std::vector<TimeSeries>>& mu,
                             const std::vector<std::vector<TimeSeries>>& nu) const {
  const SystemSpec& spec = *spec_;
  const int l = spec.l;
  const int i = comp_;
  double acc = nu[l][i].v[m] * spec.a_top[i] * omR_[l];
  for (int k = 0; k < l; ++k) {
    const double sgn = ((l + k) % 2 == 0) ? 1.0 : -1.0;
    acc += sgn * (nu[k][i].v[m] * (spec.a_top[i] * omR_[2 * l - k] -
                                   spec.a_sub[i] * omR_[2 * l - k - 1]) -
                  mu[k][i].v[m] * (spec.a_top[i] * om0_[2 * l - k] -
                                   spec.a_sub[i] * om0_[2 * l - k - 1]));
  }
  if (!spec.lower_all_zero()) {
    const double t = g_.t(m);
    for (int mc = 0; mc < spec.n; ++mc)
      for (int j = 0; j < l; ++j)
        for (int k = 0; k < j; ++k) {
          const double sgn = ((j + k) % 2 == 0) ? 1.0 : -1.0;
          acc += sgn * (nu[k][mc].v[m] * lower_boundary_coeff(mc, j, k, true, t) -
                        mu[k][mc].v[m] * lower_boundary_coeff(mc, j, k, false, t));
        }
  }
  return acc;
}

double RFunctional::sources(const VecField* f_row,
                            const std::vector<const VecField*>& G_rows) const {
  double acc = 0.0;
  if (f_row) acc += trapz_product((*f_row)[comp_], omega_d_[0], g_);
  for (int j = 0; j < static_cast<int>(G_rows.size()); ++j)
    if (G_rows[j]) acc += trapz_product((*G_rows[j])[comp_], omega_d_[j], g_);
  return acc;
}

double RFunctional::full(int m, const VecField& u_row,
                         const std::vector<std::vector<TimeSeries>>& mu,
                         const std::vector<std::vector<TimeSeries>>& nu,
                         const SourceBundle& src) const {
  const VecField* f_row = src.has_f() ? &src.f[m] : nullptr;
  std::vector<const VecField*> G_rows;
  if (src.has_G())
    for (const auto& Gj : src.G) G_rows.push_back(Gj.empty() ? nullptr : &Gj[m]);
  return boundary(m, mu, nu) + interior(g_.t(m), u_row) + sources(f_row, G_rows);
}

TimeSeries r_functional(const SystemSpec& spec, const Trajectory& traj,
                        const std::vector<std::vector<TimeSeries>>& mu,
                        const std::vector<std::vector<TimeSeries>>& nu,
                        const SourceBundle& src, int comp, const Weight& omega,
                        const Grid& g) {
  RFunctional rf(spec, comp, omega, g);
  TimeSeries out;
  out.dt = g.dt();
  out.v.resize(g.steps());
  for (int m = 0; m < g.steps(); ++m)
    out.v[m] = rf.full(m, traj.u[m], mu, nu, src);
  return out;
}

// ---- per-time source system ----

std::vector<double> cramer_source_step(std::span<const double> psi, int m,
                                       std::span<const double> z,
                                       double threshold) {
  double det = dense_det(psi, m);
  if (std::abs(det) < threshold)
    throw DegeneracyError("source system determinant " + std::to_string(det) +
                          " below threshold " + std::to_string(threshold));
  // pivoted Gaussian elimination on the augmented system
  std::vector<double> a(psi.begin(), psi.end());
  std::vector<double> b(z.begin(), z.end());
  for (int c = 0; c < m; ++c) {
    int piv = c;
    double best = std::abs(a[c * m + c]);
    for (int r = c + 1; r < m; ++r) {
      double v = std::abs(a[r * m + c]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (piv != c) {
      for (int q = 0; q < m; ++q) std::swap(a[c * m + q], a[piv * m + q]);
      std::swap(b[c], b[piv]);
    }
    for (int r = c + 1; r < m; ++r) {
      double f = a[r * m + c] / a[c * m + c];
      if (f == 0.0) continue;
      for (int q = c; q < m; ++q) a[r * m + q] -= f * a[c * m + q];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> out(m);
  for (int r = m - 1; r >= 0; --r) {
    double s = b[r];
    for (int q = r + 1; q < m; ++q) s -= a[r * m + q] * out[q];
    out[r] = s / a[r * m + r];
  }
  return out;
}

std::vector<double> cramer_quotients(std::span<const double> psi, int m,
                                     std::span<const double> z) {
  double det = dense_det(psi, m);
  std::vector<double> out(m);
  std::vector<double> work(psi.begin(), psi.end());
  for (int k = 0; k < m; ++k) {
    for (int r = 0; r < m; ++r) work[r * m + k] = z[r];
    out[k] = dense_det(work, m) / det;
    for (int r = 0; r < m; ++r) work[r * m + k] = psi[r * m + k];
  }
  return out;
}

}  // namespace odis
