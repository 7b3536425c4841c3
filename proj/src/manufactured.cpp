#include "odis/manufactured.hpp"

#include <cmath>

#include "odis/norms.hpp"

namespace odis {

namespace {

// Symbolic left side of the evolution system applied to planted expressions:
// u_t - (-1)^l (a_top d^{2l+1} + a_sub d^{2l}) u
//     - sum_{j<l} (-1)^j d^j [a_{2j+1} d^{j+1} u + a_{2j} d^j u]
//     + sum_{j<=l} (-1)^j d^j [g_j(t,x,u,...,d^{l-1}u)]
std::vector<Expr> equation_lhs(const SystemSpec& spec,
                               const std::vector<Expr>& u_star) {
  const int l = spec.l;
  const int n = spec.n;

  // x-derivative cache d^d u*_i
  std::vector<std::vector<Expr>> du(n);
  for (int i = 0; i < n; ++i) {
    du[i].resize(2 * l + 2);
    du[i][0] = u_star[i];
    for (int d = 1; d <= 2 * l + 1; ++d) du[i][d] = du[i][d - 1].diff("x");
  }

  std::unordered_map<std::string, Expr> ysub;
  for (int k = 0; k < l; ++k)
    for (int m = 0; m < n; ++m) ysub[NonlinearitySpec::yvar(k, m)] = du[m][k];

  std::vector<Expr> lhs(n);
  const double sgn_top = (spec.l % 2 == 0) ? 1.0 : -1.0;
  for (int i = 0; i < n; ++i) {
    Expr e = u_star[i].diff("t");
    e = e - Expr::constant(sgn_top) *
                (Expr::constant(spec.a_top[i]) * du[i][2 * l + 1] +
                 Expr::constant(spec.a_sub[i]) * du[i][2 * l]);
    for (int j = 0; !spec.lower.empty() && j < l; ++j) {
      Expr inner;
      for (int m = 0; m < n; ++m) {
        const CoeffField& c1 = spec.coeff(2 * j + 1, i, m);
        const CoeffField& c0 = spec.coeff(2 * j, i, m);
        if (!c1.is_zero()) inner = inner + c1.expr() * du[m][j + 1];
        if (!c0.is_zero()) inner = inner + c0.expr() * du[m][j];
      }
      if (!inner.is_zero()) {
        double sgn = (j % 2 == 0) ? 1.0 : -1.0;
        e = e - Expr::constant(sgn) * inner.diff_n("x", j);
      }
    }
    for (int j = 0; j <= l; ++j) {
      const Expr& gj = spec.nonlinearity.g[j][i];
      if (gj.is_zero()) continue;
      Expr comp = gj.subst(ysub);
      double sgn = (j % 2 == 0) ? 1.0 : -1.0;
      e = e + Expr::constant(sgn) * comp.diff_n("x", j);
    }
    lhs[i] = e;
  }
  return lhs;
}

double fd_check_expr(const Expr& e, const Expr& de, const std::string& var,
                     double t, double x) {
  // symbolic derivative vs 4th-order central difference
  const double h = 1e-4;
  EvalEnv env{{"t", t}, {"x", x}};
  auto f = [&](double v) {
    EvalEnv e2 = env;
    e2[var] = v;
    return e.eval(e2);
  };
  double base = var == "t" ? t : x;
  double fd = (-f(base + 2 * h) + 8 * f(base + h) - 8 * f(base - h) +
               f(base - 2 * h)) /
              (12 * h);
  EvalEnv env2 = env;
  env2[var] = base;
  double sym = de.eval(env2);
  double scale = 1.0 + std::abs(sym);
  return std::abs(sym - fd) / scale;
}

}  // namespace

ManufacturedCase generate_manufactured(const SystemSpec& spec, const Grid& g,
                                       const ManufacturedInput& in) {
  const int l = spec.l;
  const int n = spec.n;
  if (static_cast<int>(in.u_star.size()) != n)
    throw SolverError("manufactured case needs one planted expression per component");

  ManufacturedCase out;
  out.u_star = in.u_star;

  // derivative spot check (symbolic vs finite differences)
  for (int i = 0; i < n; ++i) {
    Expr dt = in.u_star[i].diff("t");
    Expr dx = in.u_star[i].diff("x");
    for (double tt : {0.13 * g.T, 0.71 * g.T})
      for (double xx : {0.29 * g.R, 0.83 * g.R}) {
        out.deriv_check = std::max(out.deriv_check,
                                   fd_check_expr(in.u_star[i], dt, "t", tt, xx));
        out.deriv_check = std::max(out.deriv_check,
                                   fd_check_expr(in.u_star[i], dx, "x", tt, xx));
      }
  }
  if (out.deriv_check > 1e-6)
    throw SolverError("manufactured case: symbolic derivative check failed (" +
                      std::to_string(out.deriv_check) + ")");

  std::vector<Expr> lhs = equation_lhs(spec, in.u_star);

  // h0 = lhs - sum_k F*_ki h_ki per component
  out.h0.resize(n);
  for (int i = 0; i < n; ++i) out.h0[i] = lhs[i];
  for (const auto& grp : in.groups)
    for (size_t k = 0; k < grp.h.size(); ++k)
      out.h0[grp.comp] = out.h0[grp.comp] - grp.F_star[k] * grp.h[k];

  // verification: the residual lhs - h0 - sum F* h must vanish on a fine
  // sample (catches assembly mistakes when data are edited by hand)
  double scale = 0.0;
  double worst = 0.0;
  double worst_t = 0.0, worst_x = 0.0;
  const int fine = 37;
  for (int i = 0; i < n; ++i) {
    Expr resid = lhs[i] - out.h0[i];
    for (const auto& grp : in.groups)
      if (grp.comp == i)
        for (size_t k = 0; k < grp.h.size(); ++k)
          resid = resid - grp.F_star[k] * grp.h[k];
    for (int a = 0; a <= fine; ++a)
      for (int b = 0; b <= fine; ++b) {
        double tt = g.T * a / fine;
        double xx = g.R * b / fine;
        EvalEnv env{{"t", tt}, {"x", xx}};
        double r = std::abs(resid.eval(env));
        scale = std::max(scale, std::abs(lhs[i].eval(env)));
        if (r > worst) {
          worst = r;
          worst_t = tt;
          worst_x = xx;
        }
      }
  }
  out.residual = worst / (1.0 + scale);
  if (out.residual > 1e-8)
    throw SolverError("manufactured case: substitution residual " +
                      std::to_string(out.residual) + " at t=" +
                      std::to_string(worst_t) + ", x=" + std::to_string(worst_x));

  // sample everything onto the run grid
  ProblemData data = ProblemData::zeros(g, l, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < g.points(); ++k)
      data.u0[i][k] = in.u_star[i].eval({{"t", 0.0}, {"x", g.x(k)}});

  for (int j = 0; j < l; ++j)
    for (int i = 0; i < n; ++i) {
      Expr d = in.u_star[i].diff_n("x", j);
      for (int m = 0; m < g.steps(); ++m)
        data.mu[j][i].v[m] = d.eval({{"t", g.t(m)}, {"x", 0.0}});
    }
  for (int j = 0; j <= l; ++j)
    for (int i = 0; i < n; ++i) {
      Expr d = in.u_star[i].diff_n("x", j);
      for (int m = 0; m < g.steps(); ++m)
        data.nu[j][i].v[m] = d.eval({{"t", g.t(m)}, {"x", g.R}});
    }
  for (int m = 0; m < g.steps(); ++m)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < g.points(); ++k)
        data.h0[m][i][k] = out.h0[i].eval({{"t", g.t(m)}, {"x", g.x(k)}});

  for (const auto& grp : in.groups) {
    InverseGroup ig;
    ig.comp = grp.comp;
    std::vector<TimeSeries> Fk;
    for (size_t k = 0; k < grp.h.size(); ++k) {
      std::vector<Field> h(g.steps(), Field(g.points()));
      for (int m = 0; m < g.steps(); ++m)
        for (int p = 0; p < g.points(); ++p)
          h[m][p] = grp.h[k].eval({{"t", g.t(m)}, {"x", g.x(p)}});
      ig.h.push_back(std::move(h));
      ig.omega.push_back(Weight::analytic(grp.omega[k]));

      // target by the same trapezoid rule the solver's functional uses, so
      // the compatibility condition holds discretely
      TimeSeries phi = TimeSeries::zeros(g);
      Field om(g.points()), prod(g.points());
      for (int p = 0; p < g.points(); ++p)
        om[p] = grp.omega[k].eval({{"x", g.x(p)}});
      for (int m = 0; m < g.steps(); ++m) {
        for (int p = 0; p < g.points(); ++p)
          prod[p] = in.u_star[grp.comp].eval({{"t", g.t(m)}, {"x", g.x(p)}}) * om[p];
        phi.v[m] = integrate(prod, g);
      }
      ig.phi.push_back(std::move(phi));
      ig.phi_prime.emplace_back();  // default: centered differences

      TimeSeries F = TimeSeries::zeros(g);
      for (int m = 0; m < g.steps(); ++m)
        F.v[m] = grp.F_star[k].eval({{"t", g.t(m)}});
      Fk.push_back(std::move(F));
    }
    data.groups.push_back(std::move(ig));
    data.F_known.push_back(std::move(Fk));
  }
  out.data = std::move(data);
  return out;
}

Trajectory sample_exact(const std::vector<Expr>& u_star, const Grid& g) {
  Trajectory t = Trajectory::zeros(g, static_cast<int>(u_star.size()));
  for (int m = 0; m < g.steps(); ++m)
    for (size_t i = 0; i < u_star.size(); ++i)
      for (int k = 0; k < g.points(); ++k)
        t.u[m][i][k] = u_star[i].eval({{"t", g.t(m)}, {"x", g.x(k)}});
  return t;
}

double linf_error(const Trajectory& traj, const std::vector<Expr>& u_star) {
  const Grid& g = traj.grid;
  double worst = 0.0;
  for (int m = 0; m < g.steps(); ++m)
    for (int i = 0; i < traj.n; ++i)
      for (int k = 0; k < g.points(); ++k) {
        double exact = u_star[i].eval({{"t", g.t(m)}, {"x", g.x(k)}});
        worst = std::max(worst, std::abs(traj.u[m][i][k] - exact));
      }
  return worst;
}

}  // namespace odis
