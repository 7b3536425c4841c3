#include "odis/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace odis {

double default_tol_overdet(const ProblemData& data) {
  double phimax = 0.0;
  for (const auto& grp : data.groups)
    for (const auto& phi : grp.phi)
      for (double v : phi.v) phimax = std::max(phimax, std::abs(v));
  return 1e-6 * (1.0 + phimax);
}

std::vector<VecField> assemble_source(const ProblemData& data,
                                      const std::vector<std::vector<TimeSeries>>& F,
                                      const Grid& g) {
  std::vector<VecField> f = data.h0;
  if (f.empty()) {
    int n = static_cast<int>(data.u0.size());
    f.assign(g.steps(), VecField(n, Field(g.points(), 0.0)));
  }
  if (F.empty()) return f;
  for (size_t gi = 0; gi < data.groups.size(); ++gi) {
    const InverseGroup& grp = data.groups[gi];
    for (int k = 0; k < grp.m(); ++k) {
      const TimeSeries& amp = F[gi][k];
      for (int m = 0; m < g.steps(); ++m) {
        double a = amp.v[m];
        if (a == 0.0) continue;
        const Field& h = grp.h[k][m];
        Field& target = f[m][grp.comp];
        for (int p = 0; p < g.points(); ++p) target[p] += a * h[p];
      }
    }
  }
  return f;
}

namespace {

struct Constraint {
  int group = 0;
  int k = 0;
  int comp = 0;
};

// Shared march/picard context.
struct InverseContext {
  const SystemSpec* spec;
  const ProblemData* data;
  const Grid* g;
  const SourceBundle* src_G;
  PsiMatrix psi;
  std::vector<Constraint> cons;                   // flattened (group, k)
  std::vector<std::unique_ptr<RFunctional>> rf;   // per constraint
  std::vector<TimeSeries> phi_prime;              // per constraint
  SourceBundle known;                             // f = h0, G = src_G

  int M() const { return static_cast<int>(cons.size()); }

  double full_known(int c, int m, const VecField& u_row) const {
    return rf[c]->full(m, u_row, data->mu, data->nu, known);
  }

  double phi_p(int c, int m) const { return phi_prime[c].v[m]; }

  double psi_entry(int c, int p, int m) const {
    const Constraint& cc = cons[c];
    const Constraint& cp = cons[p];
    if (cc.group != cp.group) return 0.0;
    const auto& blk = psi.blocks[cc.group];
    return blk.mats[m][cc.k * blk.m + cp.k];
  }
};

InverseContext make_context(const SystemSpec& spec, const ProblemData& data,
                            const SourceBundle* src_G, const Grid& g,
                            const InverseOptions& opts) {
  if (data.M() <= 0)
    throw PreconditionError("inverse run requires at least one overdetermination pair (M > 0)");
  InverseContext ctx;
  ctx.spec = &spec;
  ctx.data = &data;
  ctx.g = &g;
  ctx.src_G = src_G;
  ctx.psi = psi_matrix(data, g);  // throws DegeneracyError when degenerate
  if (opts.check_compat) {
    auto res = check_compatibility(data, g);
    for (size_t gi = 0; gi < res.size(); ++gi)
      for (size_t k = 0; k < res[gi].size(); ++k)
        if (res[gi][k] > opts.tol_compat)
          throw PreconditionError(
              "compatibility condition violated: |phi(0) - int u0 omega dx| = " +
              std::to_string(res[gi][k]) + " > " + std::to_string(opts.tol_compat) +
              " for component " + std::to_string(data.groups[gi].comp + 1) +
              ", pair " + std::to_string(k + 1));
  }
  for (size_t gi = 0; gi < data.groups.size(); ++gi) {
    const InverseGroup& grp = data.groups[gi];
    for (int k = 0; k < grp.m(); ++k) {
      ctx.cons.push_back({static_cast<int>(gi), k, grp.comp});
      ctx.rf.push_back(
          std::make_unique<RFunctional>(spec, grp.comp, grp.omega[k], g));
      bool analytic = grp.phi_prime.size() > static_cast<size_t>(k) &&
                      !grp.phi_prime[k].v.empty();
      ctx.phi_prime.push_back(analytic ? grp.phi_prime[k]
                                       : series_derivative(grp.phi[k]));
    }
  }
  ctx.known.f = data.h0;
  if (ctx.known.f.empty())
    ctx.known.f.assign(g.steps(),
                       VecField(spec.n, Field(g.points(), 0.0)));
  if (src_G) ctx.known.G = src_G->G;
  return ctx;
}

std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b,
                                int m) {
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
    if (best < 1e-300)
      throw DegeneracyError("determinant degeneracy in the coupled source system");
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

// Per-group amplitude solve at one time index from the identity
// psi F = phi' - r_known.
std::vector<double> amps_from_state(const InverseContext& ctx, int m,
                                    const VecField& u_row) {
  std::vector<double> out(ctx.M());
  int base = 0;
  for (size_t gi = 0; gi < ctx.data->groups.size(); ++gi) {
    const auto& blk = ctx.psi.blocks[gi];
    std::vector<double> z(blk.m);
    for (int k = 0; k < blk.m; ++k)
      z[k] = ctx.phi_p(base + k, m) - ctx.full_known(base + k, m, u_row);
    auto F = cramer_source_step(blk.mats[m], blk.m, z,
                                PsiMatrix::threshold(ctx.psi.psi0, blk.m));
    for (int k = 0; k < blk.m; ++k) out[base + k] = F[k];
    base += blk.m;
  }
  return out;
}

void store_amps(std::vector<std::vector<TimeSeries>>& F,
                const InverseContext& ctx, int m,
                const std::vector<double>& amps) {
  for (int c = 0; c < ctx.M(); ++c)
    F[ctx.cons[c].group][ctx.cons[c].k].v[m] = amps[c];
}

std::vector<std::vector<double>> residual_phi(const InverseContext& ctx,
                                              const Trajectory& traj) {
  const Grid& g = *ctx.g;
  std::vector<std::vector<double>> out;
  int c = 0;
  for (const auto& grp : ctx.data->groups) {
    std::vector<double> row;
    for (int k = 0; k < grp.m(); ++k, ++c) {
      const Field& om = ctx.rf[c]->omega_field(0);
      double worst = 0.0;
      for (int m = 0; m < g.steps(); ++m)
        worst = std::max(worst, std::abs(q_at(traj.u[m], grp.comp, om, g) -
                                         grp.phi[k].v[m]));
      row.push_back(worst);
    }
    out.push_back(std::move(row));
  }
  return out;
}

ReconstructionResult march_inverse(const InverseContext& ctx,
                                   const InverseOptions& opts) {
  const SystemSpec& spec = *ctx.spec;
  const ProblemData& data = *ctx.data;
  const Grid& g = *ctx.g;
  const int n = spec.n;
  const int P = g.points();
  const int M = ctx.M();

  ForwardDriver drv(spec, data.mu, data.nu, g, opts.theta);
  const LinearStepper& st = drv.stepper();
  const double th_dt = opts.theta * g.dt();

  Trajectory traj = Trajectory::zeros(g, n);
  traj.u[0] = data.u0;
  std::vector<std::vector<TimeSeries>> F;
  for (const auto& grp : data.groups)
    F.emplace_back(grp.m(), TimeSeries::zeros(g));

  // amplitudes at t=0 follow from the identity applied to the initial datum
  std::vector<double> amps = amps_from_state(ctx, 0, data.u0);
  store_amps(F, ctx, 0, amps);

  auto control_column = [&](int c, int m) {
    const Constraint& cc = ctx.cons[c];
    const Field& h = data.groups[cc.group].h[cc.k][m];
    std::vector<double> col(st.flat(), 0.0);
    for (int k = st.pde_begin(); k < st.pde_end(); ++k)
      col[k * n + cc.comp] = h[k];
    return col;
  };

  std::vector<double> u = flatten(data.u0, n, P);
  std::vector<double> s_known_m = drv.source_vector(0, ctx.known);
  for (int m = 0; m < g.Nt; ++m) {
    // full source at the old time includes the known amplitudes
    std::vector<double> s_m = s_known_m;
    for (int c = 0; c < M; ++c) {
      if (amps[c] == 0.0) continue;
      auto col = control_column(c, m);
      for (int r = 0; r < st.flat(); ++r) s_m[r] += amps[c] * col[r];
    }
    std::vector<double> s_known_mp1 = drv.source_vector(m + 1, ctx.known);
    std::vector<double> u_base = drv.advance_u(m, u, s_m, s_known_mp1);
    VecField base_row = unflatten(u_base, n, P);

    // responses to unit new-time amplitudes
    std::vector<std::vector<double>> resp_flat(M);
    std::vector<VecField> resp(M);
    for (int c = 0; c < M; ++c) {
      auto rhs = control_column(c, m + 1);
      for (auto& v : rhs) v *= th_dt;
      resp_flat[c] = st.solve_A(m + 1, std::move(rhs));
      resp[c] = unflatten(resp_flat[c], n, P);
    }

    // coupled source system at the new time
    std::vector<double> A(static_cast<size_t>(M) * M, 0.0);
    std::vector<double> z(M);
    for (int c = 0; c < M; ++c) {
      z[c] = ctx.phi_p(c, m + 1) - ctx.full_known(c, m + 1, base_row);
      for (int p = 0; p < M; ++p)
        A[c * M + p] = ctx.psi_entry(c, p, m + 1) +
                       ctx.rf[c]->interior(g.t(m + 1), resp[p]);
    }
    amps = solve_dense(std::move(A), std::move(z), M);
    store_amps(F, ctx, m + 1, amps);

    u = std::move(u_base);
    for (int c = 0; c < M; ++c) {
      if (amps[c] == 0.0) continue;
      for (int r = 0; r < st.flat(); ++r) u[r] += amps[c] * resp_flat[c][r];
    }
    traj.u[m + 1] = unflatten(u, n, P);
    s_known_m = std::move(s_known_mp1);
  }

  ReconstructionResult res;
  res.F = std::move(F);
  res.trajectory = std::move(traj);
  res.residual_phi = residual_phi(ctx, res.trajectory);
  res.delta_min = ctx.psi.delta_min;
  res.inner_iters = g.Nt;
  return res;
}

ReconstructionResult picard_inverse(const InverseContext& ctx,
                                    const InverseOptions& opts) {
  const SystemSpec& spec = *ctx.spec;
  const ProblemData& data = *ctx.data;
  const Grid& g = *ctx.g;

  double gamma = opts.gamma0 > 0.0 ? opts.gamma0 : std::log(10.0) / g.T;
  // configured ceiling, additionally capped where exp(-gamma T) would fall
  // below machine precision and the weighted norm lose all late-time
  // information
  const double gamma_cap = -std::log(1e-15) / g.T;
  const double gamma_max =
      std::min(opts.gamma_max > 0.0 ? opts.gamma_max : 1e4 / g.T, gamma_cap);

  std::vector<std::vector<TimeSeries>> F_prev;
  for (const auto& grp : data.groups)
    F_prev.emplace_back(grp.m(), TimeSeries::zeros(g));

  // iterate diffs kept as series so ratios can be re-measured when gamma
  // escalates
  std::vector<std::vector<TimeSeries>> diff_history;

  auto weighted_dist = [&](const std::vector<TimeSeries>& d, double gm) {
    double acc = 0.0;
    for (const auto& s : d) acc += weighted_l1(s, gm);
    return acc;
  };

  ReconstructionResult res;
  Trajectory traj = Trajectory::zeros(g, spec.n);
  bool converged = false;
  int sweeps = 0;
  int stalled = 0;
  double floor_gate = opts.tol_picard;
  for (; sweeps < opts.max_picard; ++sweeps) {
    auto f = assemble_source(data, F_prev, g);
    SourceBundle bundle = ctx.known;
    bundle.f = std::move(f);
    traj = solve_linear_forward(spec, data.u0, data.mu, data.nu, bundle, g,
                                opts.theta);
    std::vector<std::vector<TimeSeries>> F_next;
    for (const auto& grp : data.groups)
      F_next.emplace_back(grp.m(), TimeSeries::zeros(g));
    double f_scale = 0.0;
    for (int m = 0; m < g.steps(); ++m) {
      auto amps = amps_from_state(ctx, m, traj.u[m]);
      store_amps(F_next, ctx, m, amps);
    }
    for (const auto& grpF : F_next)
      for (const auto& s : grpF) f_scale += l1_norm(s);
    floor_gate = std::max(opts.tol_picard,
                          opts.noise_floor * std::max(1.0, f_scale));
    // flattened per-constraint diff series
    std::vector<TimeSeries> diff;
    for (int c = 0; c < ctx.M(); ++c) {
      const Constraint& cc = ctx.cons[c];
      TimeSeries d = F_next[cc.group][cc.k];
      for (int m = 0; m < d.size(); ++m) d.v[m] -= F_prev[cc.group][cc.k].v[m];
      diff.push_back(std::move(d));
    }
    diff_history.push_back(diff);
    F_prev = std::move(F_next);

    // the stop test uses the unweighted distance: the gamma weight is the
    // contraction metric, not a convergence certificate
    double dist_plain = weighted_dist(diff, 0.0);
    if (std::getenv("ODIS_DEBUG_PICARD"))
      fprintf(stderr, "sweep %d dist_plain %.3e gamma %.3e floor %.3e\n", sweeps,
              dist_plain, gamma, floor_gate);
    if (dist_plain < opts.tol_picard) {
      converged = true;
      ++sweeps;
      break;
    }
    if (dist_plain < floor_gate) {
      // round-off floor of the sweep
      if (++stalled >= 3) {
        converged = true;
        ++sweeps;
        break;
      }
      continue;
    }
    stalled = 0;
    if (diff_history.size() >= 2) {
      double dist = weighted_dist(diff, gamma);
      double prev_dist = weighted_dist(diff_history[diff_history.size() - 2], gamma);
      double ratio = prev_dist > 0.0 ? dist / prev_dist : 0.0;
      // enlarge gamma until the measured sweep ratio drops below 1/2
      while (ratio >= 0.5 && gamma * 2.0 <= gamma_max) {
        gamma *= 2.0;
        dist = weighted_dist(diff, gamma);
        prev_dist = weighted_dist(diff_history[diff_history.size() - 2], gamma);
        ratio = prev_dist > 0.0 ? dist / prev_dist : 0.0;
      }
    }
  }
  if (!converged) {
    std::ostringstream os;
    os << "amplitude iteration not contracting after gamma escalation to " << gamma
       << "; sweep distances (weighted):";
    for (const auto& d : diff_history) os << " " << weighted_dist(d, gamma);
    throw SolverError("inverse Picard did not converge", os.str());
  }

  // final forward pass for the converged amplitudes
  auto f = assemble_source(data, F_prev, g);
  SourceBundle bundle = ctx.known;
  bundle.f = std::move(f);
  traj = solve_linear_forward(spec, data.u0, data.mu, data.nu, bundle, g,
                              opts.theta);

  // ratios under the final gamma, over the sweeps above the round-off floor
  for (size_t s = 1; s < diff_history.size(); ++s) {
    double a_plain = weighted_dist(diff_history[s - 1], 0.0);
    double b_plain = weighted_dist(diff_history[s], 0.0);
    if (a_plain < floor_gate || b_plain < floor_gate) break;
    double a = weighted_dist(diff_history[s - 1], gamma);
    double b = weighted_dist(diff_history[s], gamma);
    res.inner_ratios.push_back(a > 0.0 ? b / a : 0.0);
  }

  res.F = std::move(F_prev);
  res.trajectory = std::move(traj);
  res.residual_phi = residual_phi(ctx, res.trajectory);
  res.delta_min = ctx.psi.delta_min;
  res.gamma_used = gamma;
  res.inner_iters = sweeps;
  return res;
}

}  // namespace

ReconstructionResult solve_linear_inverse(const SystemSpec& spec,
                                          const ProblemData& data,
                                          const SourceBundle* src_G,
                                          const Grid& g, InverseOptions opts) {
  InverseContext ctx = make_context(spec, data, src_G, g, opts);
  ReconstructionResult res = opts.method == InverseMethod::march
                                 ? march_inverse(ctx, opts)
                                 : picard_inverse(ctx, opts);
  res.c0 = compute_c0(data, g, C0Mode::inverse);
  return res;
}

ReconstructionResult solve_nonlinear_inverse(const SystemSpec& spec,
                                             const ProblemData& data,
                                             const Grid& g,
                                             InverseOptions opts) {
  {
    auto rep = validate_system(spec, g.R, g.T);
    if (!rep.ok())
      throw PreconditionError("system validation failed:\n" + rep.summary());
    auto exps = validate_exponents(spec, ExponentMode::nonstrict);
    if (!exps.ok())
      throw PreconditionError("exponent validation failed:\n" + exps.summary());
  }
  if (spec.nonlinearity.is_trivial())
    return solve_linear_inverse(spec, data, nullptr, g, opts);

  Trajectory v = opts.outer_start ? *opts.outer_start
                                  : Trajectory::zeros(g, spec.n);
  ReconstructionResult res;
  double c0 = compute_c0(data, g, C0Mode::inverse);
  double last = -1.0;
  for (int s = 0; s < opts.max_outer; ++s) {
    SourceBundle bundle;
    bundle.G.assign(spec.l + 1, std::vector<VecField>(g.steps()));
    for (int m = 0; m < g.steps(); ++m) {
      auto G = eval_nonlinearity_step(spec, v.u[m], g, g.t(m));
      for (int j = 0; j <= spec.l; ++j) {
        for (auto& compf : G[j])
          for (auto& val : compf) val = -val;
        bundle.G[j][m] = std::move(G[j]);
      }
    }
    ReconstructionResult inner = solve_linear_inverse(spec, data, &bundle, g, opts);
    double d = x_norm_diff(inner.trajectory, v, spec.l).total;
    if (last > 0.0) res.outer_ratios.push_back(d / last);
    last = d;
    v = inner.trajectory;
    if (d < opts.tol_outer) {
      inner.outer_ratios = res.outer_ratios;
      inner.c0 = c0;
      return inner;
    }
  }
  std::ostringstream os;
  os << "smallness regime violated: outer iteration not converged; c0 = " << c0
     << "; ratios:";
  for (double r : res.outer_ratios) os << " " << r;
  throw SolverError("nonlinear inverse outer iteration diverged", os.str());
}

double stability_probe(const SystemSpec& spec, const ProblemData& data,
                       const Grid& g,
                       const std::vector<std::vector<TimeSeries>>& delta_phi,
                       InverseOptions opts) {
  ReconstructionResult base = solve_nonlinear_inverse(spec, data, g, opts);

  double dphi_norm = 0.0;
  for (const auto& grp : delta_phi)
    for (const auto& s : grp) dphi_norm += l1_norm(series_derivative(s));
  if (dphi_norm == 0.0) return 0.0;  // 0/0 reported as 0 by convention

  ProblemData perturbed = data;
  for (size_t gi = 0; gi < perturbed.groups.size(); ++gi)
    for (int k = 0; k < perturbed.groups[gi].m(); ++k) {
      auto& phi = perturbed.groups[gi].phi[k];
      for (int m = 0; m < phi.size(); ++m) phi.v[m] += delta_phi[gi][k].v[m];
      // analytic phi' no longer matches; fall back to differencing
      if (perturbed.groups[gi].phi_prime.size() > static_cast<size_t>(k))
        perturbed.groups[gi].phi_prime[k].v.clear();
    }
  // the perturbation shifts phi(0); keep the compatibility gate on the base data
  InverseOptions popts = opts;
  popts.check_compat = false;
  ReconstructionResult pert = solve_nonlinear_inverse(spec, perturbed, g, popts);

  double dF = 0.0;
  for (size_t gi = 0; gi < base.F.size(); ++gi)
    for (size_t k = 0; k < base.F[gi].size(); ++k) {
      TimeSeries d = pert.F[gi][k];
      for (int m = 0; m < d.size(); ++m) d.v[m] -= base.F[gi][k].v[m];
      dF += l1_norm(d);
    }
  double du = x_norm_diff(pert.trajectory, base.trajectory, spec.l).total;
  return (dF + du) / dphi_norm;
}

}  // namespace odis
