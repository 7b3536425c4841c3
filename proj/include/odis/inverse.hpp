#pragma once

#include <optional>

#include "odis/forward.hpp"
#include "odis/functionals.hpp"
#include "odis/model.hpp"

namespace odis {

/// Violated precondition of a solve (degenerate system, incompatible data).
/// The CLI maps this to a validation refusal.
class PreconditionError : public SolverError {
 public:
  using SolverError::SolverError;
};

enum class InverseMethod { march, picard };

struct InverseOptions {
  InverseMethod method = InverseMethod::march;
  double theta = 0.5;
  double gamma0 = -1.0;    // < 0: start at log(10)/T
  double gamma_max = -1.0; // < 0: 1e4/T
  double tol_picard = 1e-12;  // L1 sweep distance
  int max_picard = 200;
  // relative level below which sweep differences count as round-off noise
  double noise_floor = 1e-9;
  double tol_outer = 1e-8;  // X-norm of outer difference
  int max_outer = 60;
  double tol_compat = 1e-6;
  bool check_compat = true;
  std::optional<Trajectory> outer_start;  // nonlinear initial iterate
};

struct ReconstructionResult {
  std::vector<std::vector<TimeSeries>> F;         // [group][k]
  Trajectory trajectory;
  std::vector<std::vector<double>> residual_phi;  // [group][k], max_t |q - phi|
  double delta_min = 0.0;
  double gamma_used = 0.0;
  std::vector<double> outer_ratios;
  std::vector<double> inner_ratios;
  int inner_iters = 0;
  double c0 = 0.0;
};

/// Default gate on the reported target residuals: 1e-6 * (1 + max |phi|).
double default_tol_overdet(const ProblemData& data);

/// f_i(t,x) = h0_i + sum_k F_ki(t) h_ki(t,x); components without controls
/// keep f_i = h0_i. Empty F means all amplitudes zero.
std::vector<VecField> assemble_source(const ProblemData& data,
                                      const std::vector<std::vector<TimeSeries>>& F,
                                      const Grid& g);

/// Amplitude recovery for the linear problem. method=march advances one step
/// at a time, solving the per-step source system coupled with the step
/// responses; method=picard iterates the amplitude operator over the whole
/// horizon, with the contraction measured in the gamma-weighted L1 norm.
/// Both realize the same discrete fixed point. src_G optionally carries
/// known divergence-form sources (the nonlinear outer loop supplies the
/// frozen nonlinearity through it).
ReconstructionResult solve_linear_inverse(const SystemSpec& spec,
                                          const ProblemData& data,
                                          const SourceBundle* src_G,
                                          const Grid& g,
                                          InverseOptions opts = {});

/// Outer Picard over the trajectory: each sweep freezes the nonlinearity
/// from the previous iterate and runs the linear inverse solve.
ReconstructionResult solve_nonlinear_inverse(const SystemSpec& spec,
                                             const ProblemData& data,
                                             const Grid& g,
                                             InverseOptions opts = {});

/// Empirical Lipschitz ratio: rerun with phi perturbed by delta_phi and
/// return (|dF|_L1 + |du|_X) / |d phi'|_L1 (0 for a zero perturbation).
double stability_probe(const SystemSpec& spec, const ProblemData& data,
                       const Grid& g,
                       const std::vector<std::vector<TimeSeries>>& delta_phi,
                       InverseOptions opts = {});

}  // namespace odis
