#include "odis/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "odis/inverse.hpp"
#include "odis/stencils.hpp"

namespace odis {

// ---- CoeffField ----

CoeffField CoeffField::analytic(Expr e) {
  CoeffField c;
  if (e.is_zero()) return c;
  c.kind_ = Kind::Analytic;
  c.e_ = e;
  c.time_varying_ = e.variables().count("t") > 0;
  return c;
}

CoeffField CoeffField::sampled(std::vector<Field> values, Grid grid) {
  CoeffField c;
  c.kind_ = Kind::Sampled;
  c.samples_ = std::move(values);
  c.sample_grid_ = grid;
  c.time_varying_ = true;
  return c;
}

double CoeffField::eval(double t, double x) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Analytic: return e_.eval({{"t", t}, {"x", x}});
    case Kind::Sampled: {
      const Grid& g = sample_grid_;
      double s = std::clamp(t / g.dt(), 0.0, static_cast<double>(g.Nt));
      int m0 = std::min(static_cast<int>(s), g.Nt - 1);
      double w = s - m0;
      double xk = std::clamp(x / g.dx(), 0.0, static_cast<double>(g.points() - 1));
      int k = static_cast<int>(std::lround(xk));
      return (1.0 - w) * samples_[m0][k] + w * samples_[m0 + 1][k];
    }
  }
  return 0.0;
}

double CoeffField::eval_dx(double t, double x, int order) const {
  if (order == 0) return eval(t, x);
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Analytic: {
      Expr d = e_.diff_n("x", order);
      return d.eval({{"t", t}, {"x", x}});
    }
    case Kind::Sampled: {
      const Grid& g = sample_grid_;
      double s = std::clamp(t / g.dt(), 0.0, static_cast<double>(g.Nt));
      int m0 = std::min(static_cast<int>(s), g.Nt - 1);
      double w = s - m0;
      Field row(g.points());
      for (int k = 0; k < g.points(); ++k)
        row[k] = (1.0 - w) * samples_[m0][k] + w * samples_[m0 + 1][k];
      int k = static_cast<int>(std::lround(std::clamp(
          x / g.dx(), 0.0, static_cast<double>(g.points() - 1))));
      return apply_stencil(derivative_stencil(g, order, k), row);
    }
  }
  return 0.0;
}

const Expr& CoeffField::expr() const {
  static const Expr zero;
  if (kind_ == Kind::Sampled)
    throw SolverError("coefficient field is sampled, no closed form available");
  return kind_ == Kind::Zero ? zero : e_;
}

// ---- NonlinearitySpec ----

NonlinearitySpec NonlinearitySpec::trivial(int l, int n) {
  NonlinearitySpec s;
  s.l = l;
  s.n = n;
  s.g.assign(l + 1, std::vector<Expr>(n));  // default Expr() == 0
  // NaN marks triples with no declared growth (zero-gradient entries)
  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.b1.assign(l + 1, std::vector<std::vector<double>>(
                         std::max(l, 1), std::vector<double>(std::max(l, 1), nan)));
  s.b2 = s.b1;
  return s;
}

bool NonlinearitySpec::is_trivial() const {
  for (const auto& row : g)
    for (const auto& e : row)
      if (!e.is_zero()) return false;
  return true;
}

namespace {
EvalEnv y_env(int l, int n, double t, double x,
              const std::vector<std::vector<double>>& y) {
  EvalEnv env{{"t", t}, {"x", x}};
  for (int k = 0; k < l; ++k)
    for (int m = 0; m < n; ++m) env[NonlinearitySpec::yvar(k, m)] = y[k][m];
  return env;
}
}  // namespace

double NonlinearitySpec::eval(int j, int i, double t, double x,
                              const std::vector<std::vector<double>>& y) const {
  return g[j][i].eval(y_env(l, n, t, x, y));
}

double NonlinearitySpec::eval_grad(int j, int i, int k, int m, double t, double x,
                                   const std::vector<std::vector<double>>& y) const {
  return g[j][i].diff(yvar(k, m)).eval(y_env(l, n, t, x, y));
}

// ---- SystemSpec ----

bool SystemSpec::lower_all_zero() const {
  for (const auto& row : lower)
    for (const auto& c : row)
      if (!c.is_zero()) return false;
  return true;
}

bool SystemSpec::time_varying() const {
  for (const auto& row : lower)
    for (const auto& c : row)
      if (c.time_varying()) return true;
  return false;
}

// ---- Weight ----

Weight Weight::analytic(Expr omega) {
  Weight w;
  w.analytic_ = true;
  w.e_ = omega;
  return w;
}

Weight Weight::sampled(Field values) {
  Weight w;
  w.analytic_ = false;
  w.samples_ = std::move(values);
  return w;
}

double Weight::deriv_at(double x, int order, const Grid& g) const {
  if (analytic_) return e_.diff_n("x", order).eval({{"x", x}});
  // sampled: stencils on the run grid; exact endpoints use one-sided rows
  if (x <= 0.0) return apply_stencil(boundary_stencil(g, order, false, order + 3), samples_);
  if (x >= g.R) return apply_stencil(boundary_stencil(g, order, true, order + 3), samples_);
  int k = static_cast<int>(std::lround(x / g.dx()));
  return apply_stencil(derivative_stencil(g, order, k), samples_);
}

Field Weight::deriv_field(const Grid& g, int order) const {
  Field out(g.points());
  if (analytic_) {
    Expr d = e_.diff_n("x", order);
    for (int k = 0; k < g.points(); ++k) out[k] = d.eval({{"x", g.x(k)}});
    return out;
  }
  if (order == 0) {
    out = samples_;
    out.resize(g.points(), 0.0);
    return out;
  }
  return differentiate(g, samples_, order);
}

const Expr& Weight::expr() const {
  if (!analytic_) throw SolverError("weight is sampled, no closed form available");
  return e_;
}

// ---- ProblemData ----

int ProblemData::M() const {
  int m = 0;
  for (const auto& grp : groups) m += grp.m();
  return m;
}

ProblemData ProblemData::zeros(const Grid& g, int l, int n) {
  ProblemData d;
  d.u0.assign(n, Field(g.points(), 0.0));
  d.mu.assign(l, std::vector<TimeSeries>(n, TimeSeries::zeros(g)));
  d.nu.assign(l + 1, std::vector<TimeSeries>(n, TimeSeries::zeros(g)));
  d.h0.assign(g.steps(), VecField(n, Field(g.points(), 0.0)));
  return d;
}

std::string ValidationReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream os;
  for (const auto& it : items) os << "[" << it.code << "] " << it.message << "\n";
  return os.str();
}

// ---- validation operations ----

double coercivity_margin(const SystemSpec& spec, double R) {
  double alpha0 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < spec.n; ++i) {
    for (double x : {0.0, R}) {
      double v = (2 * spec.l + 1) * spec.a_top[i] - 2.0 * spec.a_sub[i] * (1.0 + x);
      alpha0 = std::min(alpha0, v);
    }
  }
  return alpha0;
}

ValidationReport validate_system(const SystemSpec& spec, double R, double T) {
  ValidationReport rep;
  if (spec.l < 1) rep.fail("order", "l must be a positive integer");
  if (spec.n < 1) rep.fail("dimension", "n must be a positive integer");
  if (static_cast<int>(spec.a_top.size()) != spec.n)
    rep.fail("shape", "a_top must have n entries");
  if (static_cast<int>(spec.a_sub.size()) != spec.n)
    rep.fail("shape", "a_sub must have n entries");
  if (!rep.ok()) return rep;

  for (int i = 0; i < spec.n; ++i) {
    if (!(spec.a_top[i] > 0.0))
      rep.fail("sign_a_top", "a_top[" + std::to_string(i) + "] = " +
                                 std::to_string(spec.a_top[i]) + " must be > 0");
    if (!(spec.a_sub[i] <= 0.0))
      rep.fail("sign_a_sub", "a_sub[" + std::to_string(i) + "] = " +
                                 std::to_string(spec.a_sub[i]) + " must be <= 0");
  }

  if (!spec.lower.empty() &&
      static_cast<int>(spec.lower.size()) != 2 * spec.l)
    rep.fail("shape", "lower coefficient list must have 2l entries");
  for (size_t j = 0; j < spec.lower.size(); ++j) {
    if (static_cast<int>(spec.lower[j].size()) != spec.n * spec.n) {
      rep.fail("shape", "coeff_" + std::to_string(j) + " must be an n x n matrix");
      continue;
    }
    // finiteness on the closed rectangle, sampled
    for (const auto& c : spec.lower[j]) {
      if (c.is_zero()) continue;
      for (double t : {0.0, 0.37 * T, T})
        for (double x : {0.0, 0.5 * R, R})
          if (!std::isfinite(c.eval(t, x))) {
            rep.fail("coeff_finite",
                     "coeff_" + std::to_string(j) + " not finite at t=" +
                         std::to_string(t) + ", x=" + std::to_string(x));
            t = T; break;
          }
    }
  }

  double alpha0 = coercivity_margin(spec, R);
  rep.metrics["alpha0"] = alpha0;
  if (!(alpha0 > 0.0))
    rep.fail("coercivity", "coercivity margin alpha0 = " + std::to_string(alpha0) +
                               " must be positive");

  // nonlinearity must vanish at y = 0 (spot check)
  const auto& nl = spec.nonlinearity;
  if (static_cast<int>(nl.g.size()) == spec.l + 1) {
    std::vector<std::vector<double>> y0(std::max(spec.l, 1),
                                        std::vector<double>(spec.n, 0.0));
    for (int j = 0; j <= spec.l; ++j)
      for (int i = 0; i < spec.n; ++i)
        for (double t : {0.0, 0.5 * T, T})
          for (double x : {0.0, 0.25 * R, R}) {
            double v = nl.eval(j, i, t, x, y0);
            if (std::abs(v) > 1e-12) {
              rep.fail("nonlinearity_origin",
                       "g_" + std::to_string(j) + "[" + std::to_string(i) +
                           "](t,x,0,...,0) = " + std::to_string(v) +
                           " must vanish");
              t = T; x = R;
            }
          }
  } else if (!nl.g.empty()) {
    rep.fail("shape", "nonlinearity must provide g_j for j = 0..l");
  }
  return rep;
}

ValidationReport validate_exponents(const SystemSpec& spec, ExponentMode mode) {
  ValidationReport rep;
  const auto& nl = spec.nonlinearity;
  const int l = spec.l;
  if (static_cast<int>(nl.b2.size()) != l + 1) {
    rep.fail("shape", "exponent table must cover j = 0..l");
    return rep;
  }
  for (int j = 0; j <= l; ++j) {
    for (int k = 0; k < l; ++k) {
      for (int m = 0; m < l; ++m) {
        double lo = nl.b1[j][k][m];
        double hi = nl.b2[j][k][m];
        if (std::isnan(lo) && std::isnan(hi)) continue;  // no declared growth
        std::string triple = "(j=" + std::to_string(j) + ",k=" + std::to_string(k) +
                             ",m=" + std::to_string(m) + ")";
        if (!(lo > 0.0) || lo > hi) {
          rep.fail("exponent_order", "need 0 < b1 <= b2 at " + triple);
          continue;
        }
        double bound = static_cast<double>(4 * l - 2 * j - 2 * k) / (2 * m + 1);
        bool pass = mode == ExponentMode::strict ? hi < bound : hi <= bound;
        if (!pass)
          rep.fail(mode == ExponentMode::strict ? "exponent_strict"
                                                : "exponent_bound",
                   "b2" + triple + " = " + std::to_string(hi) +
                       (mode == ExponentMode::strict ? " must be < " : " must be <= ") +
                       std::to_string(bound));
      }
    }
  }
  return rep;
}

ValidationReport validate_weight(const Weight& w, int l, const Grid& g,
                                 double tol_bc) {
  ValidationReport rep;
  for (int m = 0; m <= l; ++m) {
    double v = w.deriv_at(0.0, m, g);
    if (std::abs(v) > tol_bc)
      rep.fail("weight_left", "omega^(" + std::to_string(m) + ")(0) = " +
                                  std::to_string(v) + " exceeds tol " +
                                  std::to_string(tol_bc));
  }
  for (int m = 0; m < l; ++m) {
    double v = w.deriv_at(g.R, m, g);
    if (std::abs(v) > tol_bc)
      rep.fail("weight_right", "omega^(" + std::to_string(m) + ")(R) = " +
                                   std::to_string(v) + " exceeds tol " +
                                   std::to_string(tol_bc));
  }
  return rep;
}

double default_tol_bc(const Weight& w, const Grid& g) {
  return w.is_analytic() ? 1e-10 : 10.0 * g.dx() * g.dx();
}

std::vector<std::vector<double>> check_compatibility(const ProblemData& data,
                                                     const Grid& g) {
  std::vector<std::vector<double>> res;
  for (const auto& grp : data.groups) {
    std::vector<double> r;
    for (int k = 0; k < grp.m(); ++k) {
      Field prod(g.points());
      Field om = grp.omega[k].deriv_field(g, 0);
      for (int p = 0; p < g.points(); ++p) prod[p] = data.u0[grp.comp][p] * om[p];
      r.push_back(std::abs(grp.phi[k].v[0] - integrate(prod, g)));
    }
    res.push_back(std::move(r));
  }
  return res;
}

TimeSeries series_derivative(const TimeSeries& s) {
  TimeSeries d;
  d.dt = s.dt;
  const int n = s.size();
  d.v.resize(n);
  if (n < 2) return d;
  d.v[0] = (s.v[1] - s.v[0]) / s.dt;
  d.v[n - 1] = (s.v[n - 1] - s.v[n - 2]) / s.dt;
  if (n >= 3) {
    d.v[0] = (-1.5 * s.v[0] + 2.0 * s.v[1] - 0.5 * s.v[2]) / s.dt;
    d.v[n - 1] = (1.5 * s.v[n - 1] - 2.0 * s.v[n - 2] + 0.5 * s.v[n - 3]) / s.dt;
  }
  for (int m = 1; m < n - 1; ++m) d.v[m] = (s.v[m + 1] - s.v[m - 1]) / (2.0 * s.dt);
  return d;
}

double compute_c0(const ProblemData& data, const Grid& g, C0Mode mode) {
  const int l = static_cast<int>(data.mu.size());
  double c0 = 0.0;
  for (const auto& comp : data.u0) c0 += l2_norm(comp, g);
  c0 += boundary_norm(data.mu, data.nu, l);
  if (mode == C0Mode::direct) {
    auto f = assemble_source(data, data.F_known, g);
    c0 += l1_l2_norm(f, g);
  } else {
    c0 += l1_l2_norm(data.h0, g);
    for (const auto& grp : data.groups) {
      for (int k = 0; k < grp.m(); ++k) {
        bool analytic = grp.phi_prime.size() > static_cast<size_t>(k) &&
                        !grp.phi_prime[k].v.empty();
        c0 += l1_norm(analytic ? grp.phi_prime[k]
                               : series_derivative(grp.phi[k]));
      }
    }
  }
  return c0;
}

SigmaT0 compute_sigma_T0(const SystemSpec& spec, double delta, double c_empirical,
                         const Grid* grid) {
  const auto& nl = spec.nonlinearity;
  const int l = spec.l;
  double sigma = std::numeric_limits<double>::infinity();
  double b1min = std::numeric_limits<double>::infinity();
  double b2max = 0.0;
  bool any = false;
  for (int j = 0; j <= l; ++j)
    for (int k = 0; k < l; ++k)
      for (int m = 0; m < l; ++m) {
        double b2 = nl.b2[j][k][m];
        if (std::isnan(b2)) continue;
        any = true;
        sigma = std::min(sigma, (4.0 * l - 2 * j - 2 * k - (2 * m + 1) * b2) /
                                    (4.0 * l));
        b1min = std::min(b1min, nl.b1[j][k][m]);
        b2max = std::max(b2max, b2);
      }
  if (!any) {
    // no declared growth: no smallness constraint on the horizon
    SigmaT0 st{std::numeric_limits<double>::infinity(),
               grid ? grid->T : std::numeric_limits<double>::infinity()};
    return st;
  }
  if (!(sigma > 0.0))
    throw SolverError("sigma = " + std::to_string(sigma) +
                      " is not positive; strict exponent bounds violated");
  const double c = c_empirical;
  double denom = 4.0 * c * (std::pow(2.0 * c * delta, b1min) +
                            std::pow(2.0 * c * delta, b2max));
  double T0 = denom > 0.0 ? std::pow(1.0 / denom, 1.0 / sigma)
                          : std::numeric_limits<double>::infinity();
  if (grid) {
    // largest grid time m*dt <= T0 (at least one step)
    double steps = std::floor(T0 / grid->dt());
    T0 = std::clamp(steps, 1.0, static_cast<double>(grid->Nt)) * grid->dt();
  }
  return {sigma, T0};
}

}  // namespace odis
