#pragma once

#include <memory>
#include <optional>
#include <span>

#include "odis/banded.hpp"
#include "odis/model.hpp"
#include "odis/stencils.hpp"
#include "odis/trajectory.hpp"

namespace odis {

/// Right-hand side of the linear analogue: f plus the divergence-form
/// sources sum_j (-1)^j d^j/dx^j G_j. Empty containers mean identically
/// zero.
struct SourceBundle {
  std::vector<VecField> f;               // [step][i][point]
  std::vector<std::vector<VecField>> G;  // [j][step][i][point], j = 0..l

  bool has_f() const { return !f.empty(); }
  bool has_G() const { return !G.empty(); }
};

/// Smooth-in-x lifting of the boundary traces: per component and time step
/// a two-point Hermite polynomial of degree <= 2l-1 matching
/// d^j psi(t,0) = mu_j and d^j psi(t,R) = nu_j for j = 0..l-1.
/// Substituting v = u - psi homogenizes the conditions of order <= l-1.
std::vector<VecField> lift_boundary(const std::vector<std::vector<TimeSeries>>& mu,
                                    const std::vector<std::vector<TimeSeries>>& nu,
                                    const Grid& g, int l);

/// One boundary-condition row: derivative order, side, one-sided stencil.
struct BCRow {
  int point = 0;        // grid row carrying this condition
  int deriv_order = 0;  // j
  bool at_right = false;
  StencilRow stencil;
};

/// Spatially discretized operator L with u_t = L u + sources on the interior
/// rows; boundary rows encode the l conditions at x=0 and l+1 at x=R.
struct LinearOperator {
  Grid grid;
  int n = 1;
  int l = 1;
  double t = 0.0;
  BandedMatrix L;  // interior (PDE) rows only; BC row entries stay zero
  std::vector<BCRow> bc;

  int pde_begin() const { return l; }                    // first PDE row point
  int pde_end() const { return grid.points() - l - 1; }  // one past last
  bool is_pde_point(int k) const { return k >= pde_begin() && k < pde_end(); }
};

LinearOperator assemble_linear_operator(const SystemSpec& spec, const Grid& g,
                                        double t);

/// theta-scheme stepper over the lifted variable. Factors the step matrix
/// once when the operator is time-invariant.
class LinearStepper {
 public:
  LinearStepper(const SystemSpec& spec, const Grid& g, double theta = 0.5);

  int flat() const { return spec_.n * g_.points(); }
  int n() const { return spec_.n; }
  int l() const { return spec_.l; }
  double theta() const { return theta_; }
  const Grid& grid() const { return g_; }
  int pde_begin() const { return spec_.l; }
  int pde_end() const { return g_.points() - spec_.l - 1; }
  static int idx(int k, int i, int n) { return k * n + i; }

  /// out = L(t_step) state on PDE rows, 0 on BC rows.
  void apply_L(int step, std::span<const double> state,
               std::span<double> out) const;

  /// Solve (I - theta dt L(t_target)) x = rhs with BC rows imposed; the BC
  /// rows of rhs must already carry the boundary values.
  std::vector<double> solve_A(int target_step, std::vector<double> rhs) const;

  const LinearOperator& op(int step) const;

 private:
  const BandedLU& lu(int target_step) const;

  SystemSpec spec_;
  Grid g_;
  double theta_;
  bool invariant_;
  mutable std::unique_ptr<LinearOperator> op_;
  mutable int op_step_ = -1;
  mutable std::unique_ptr<BandedLU> lu_;
  mutable int lu_step_ = -1;
};

/// Shared stepping context: lift fields, boundary values, source vectors.
/// Used by the linear forward solve and by the inverse time march.
class ForwardDriver {
 public:
  ForwardDriver(const SystemSpec& spec,
                const std::vector<std::vector<TimeSeries>>& mu,
                const std::vector<std::vector<TimeSeries>>& nu, const Grid& g,
                double theta = 0.5);

  const LinearStepper& stepper() const { return stepper_; }
  const Grid& grid() const { return stepper_.grid(); }
  int n() const { return stepper_.n(); }

  std::vector<double> lift_flat(int m) const;

  /// PDE-row source vector f^m + sum_j (-1)^j D^j G_j^m (flat).
  std::vector<double> source_vector(int m, const SourceBundle& src) const;

  /// One CN step in the original variable: u^{m+1} from u^m and the two
  /// source vectors (lift handled internally).
  std::vector<double> advance_u(int m, std::span<const double> u_m,
                                std::span<const double> s_m,
                                std::span<const double> s_mp1) const;

 private:
  LinearStepper stepper_;
  const std::vector<std::vector<TimeSeries>>* mu_;
  const std::vector<std::vector<TimeSeries>>* nu_;
  std::vector<VecField> lift_;  // [step][i][point]
};

/// Discrete solution operator for the linear analogue with data
/// (u0, mu, nu, f, G). With only (u0,mu,nu) nonzero this realizes the
/// boundary-data part; with only f the source part; with only G_j the
/// divergence-form parts.
Trajectory solve_linear_forward(const SystemSpec& spec, const VecField& u0,
                                const std::vector<std::vector<TimeSeries>>& mu,
                                const std::vector<std::vector<TimeSeries>>& nu,
                                const SourceBundle& src, const Grid& g,
                                double theta = 0.5);

/// G_j rows g_j(t,x,u,...,d^{l-1}u) for one time step; f slot zero.
std::vector<VecField> eval_nonlinearity_step(const SystemSpec& spec,
                                             const VecField& u, const Grid& g,
                                             double t);

/// Full bundle of nonlinearity values along a trajectory.
SourceBundle eval_nonlinearity(const SystemSpec& spec, const Trajectory& traj);

struct PicardOptions {
  double tol = 1e-10;   // X-norm of consecutive difference, times max(1, |u|_X)
  int max_iter = 50;
  bool per_step = false;  // cross-check mode: per-step inner iteration
  double theta = 0.5;
  // differences below this (relative) level count as the round-off floor
  // of the sweep; stagnating there is convergence, not failure
  double noise_floor = 1e-7;
  // initial iterate override (default: the linear solve)
  std::optional<Trajectory> start;
};

struct PicardDiagnostics {
  std::vector<double> ratios;
  int sweeps = 0;
  bool converged = false;
  bool at_noise_floor = false;
  double c0 = 0.0;
};

/// Quasilinear solve: global Picard iteration u^{s+1} = Theta u^s, each
/// sweep a full linear solve with the nonlinearity frozen from the previous
/// iterate. Throws SolverError with the ratio history on contraction
/// failure.
std::pair<Trajectory, PicardDiagnostics> solve_nonlinear_forward(
    const SystemSpec& spec, const ProblemData& data, const Grid& g,
    PicardOptions opts = {});

/// Energy diagnostic: integral of u_i^2 (1+x) dx per time step.
std::vector<double> energy_series(const Trajectory& traj, int comp);

std::vector<double> flatten(const VecField& v, int n, int P);
VecField unflatten(std::span<const double> flat, int n, int P);

}  // namespace odis
