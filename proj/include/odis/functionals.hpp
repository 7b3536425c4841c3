#pragma once

#include <optional>

#include "odis/forward.hpp"
#include "odis/model.hpp"

namespace odis {

/// Gram-type matrices psi_{kji}(t) of controls against weights, with the
/// per-step determinants Delta_i(t).
struct PsiMatrix {
  struct Block {
    int comp = 0;
    int m = 0;
    std::vector<std::vector<double>> mats;  // [step], row-major k*m+j
    std::vector<double> det;                // [step]
  };
  std::vector<Block> blocks;  // aligned with ProblemData::groups
  double delta_min = 0.0;
  double psi0 = 0.0;

  /// Scale-aware degeneracy guard.
  static double threshold(double psi0, int m);
};

/// Fills the psi matrices by quadrature and records determinant extrema.
/// Throws DegeneracyError naming the first degenerate time when the minimum
/// determinant falls below the threshold.
PsiMatrix psi_matrix(const ProblemData& data, const Grid& g);

/// Overdetermination functional q(t) = int u_i(t,x) omega(x) dx per step.
TimeSeries q_functional(const Trajectory& traj, int comp, const Weight& omega,
                        const Grid& g);

double q_at(const VecField& u_row, int comp, std::span<const double> omega_field,
            const Grid& g);

/// Right side of the derivative identity q'(t) = r(t): boundary blocks in
/// the traces, interior integrals of the state against derivative kernels
/// of the weight and coefficients, and the source integrals. Kernels are
/// precomputed per (component, weight) pair so the time march can reuse
/// them each step.
class RFunctional {
 public:
  RFunctional(const SystemSpec& spec, int comp, const Weight& omega,
              const Grid& g);

  /// Interior-integral part (acts on any candidate state row).
  double interior(double t, const VecField& u_row) const;

  /// Trace blocks at time index m.
  double boundary(int m, const std::vector<std::vector<TimeSeries>>& mu,
                  const std::vector<std::vector<TimeSeries>>& nu) const;

  /// int f_i omega dx + sum_j int G_ji omega^(j) dx for one step.
  double sources(const VecField* f_row,
                 const std::vector<const VecField*>& G_rows) const;

  double full(int m, const VecField& u_row,
              const std::vector<std::vector<TimeSeries>>& mu,
              const std::vector<std::vector<TimeSeries>>& nu,
              const SourceBundle& src) const;

  const Field& omega_field(int d) const { return omega_d_[d]; }

 private:
  const SystemSpec* spec_;
  int comp_;
  Grid g_;
  std::vector<Field> omega_d_;        // omega^(d) sampled, d = 0..2l+1
  Field kernel_top_;                  // leading-order interior kernel
  bool lower_static_ = true;
  mutable std::vector<Field> kernel_low_;  // per column component (static case)
  // endpoint derivative values of omega, d = 0..2l+1
  std::vector<double> om0_, omR_;

  Field lower_kernel(int m_col, double t) const;
  double lower_boundary_coeff(int m_col, int j, int k, bool at_right,
                              double t) const;
};

/// Series evaluation of the identity right side along a trajectory.
TimeSeries r_functional(const SystemSpec& spec, const Trajectory& traj,
                        const std::vector<std::vector<TimeSeries>>& mu,
                        const std::vector<std::vector<TimeSeries>>& nu,
                        const SourceBundle& src, int comp, const Weight& omega,
                        const Grid& g);

/// Solve sum_j F_j psi_{kj} = z_k by pivoted elimination; throws
/// DegeneracyError when |det psi| is below the threshold.
std::vector<double> cramer_source_step(std::span<const double> psi, int m,
                                       std::span<const double> z,
                                       double threshold);

/// Literal determinant-quotient solution (test oracle for the pivoted path).
std::vector<double> cramer_quotients(std::span<const double> psi, int m,
                                     std::span<const double> z);

/// Determinant of a row-major m x m matrix: closed form for m <= 3, pivoted
/// LU above.
double dense_det(std::span<const double> a, int m);

}  // namespace odis
