#pragma once

#include "odis/expr.hpp"
#include "odis/model.hpp"

namespace odis {

/// Planted-solution verification case: expressions for the exact solution
/// and amplitudes plus the problem data derived from them by substitution.
struct ManufacturedInput {
  std::vector<Expr> u_star;  // [i], expressions in (t,x)
  struct Group {
    int comp = 0;
    std::vector<Expr> h;       // controls h_ki(t,x)
    std::vector<Expr> omega;   // weights omega_ki(x)
    std::vector<Expr> F_star;  // planted amplitudes F_ki(t)
  };
  std::vector<Group> groups;
};

struct ManufacturedCase {
  std::vector<Expr> u_star;
  std::vector<Expr> h0;  // derived known source part, per component
  ProblemData data;      // sampled on the run grid, with F_known = F*
  double residual = 0.0;
  double deriv_check = 0.0;  // symbolic-vs-FD derivative spot check
};

/// Derives h0 by substituting the planted solution into the equation,
/// reads traces off the planted solution, and builds the overdetermination
/// targets by the same quadrature the solver applies. Aborts when the
/// substitution residual on the verification sample exceeds 1e-8 relative.
ManufacturedCase generate_manufactured(const SystemSpec& spec, const Grid& g,
                                       const ManufacturedInput& in);

/// Exact trajectory samples of an expression solution (for error
/// measurements).
Trajectory sample_exact(const std::vector<Expr>& u_star, const Grid& g);

/// Max-norm trajectory error against an expression solution.
double linf_error(const Trajectory& traj, const std::vector<Expr>& u_star);

}  // namespace odis
