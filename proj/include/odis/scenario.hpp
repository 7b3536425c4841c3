#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>

#include "odis/inverse.hpp"
#include "odis/manufactured.hpp"

namespace odis {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed experiment description: system (preset or inline), grid, data
/// expressions, overdetermination set, run mode and tolerances.
///
/// File format: one `key = value` per line, `#` comments. Values are
/// numbers, [arrays], or expressions in t and x. Component and pair
/// indices in key names are 1-based.
struct Scenario {
  std::string name = "scenario";
  std::string origin;
  SystemSpec spec;
  Grid grid;

  std::vector<Expr> u0_e;                 // per component
  std::vector<Expr> h0_e;                 // per component
  std::vector<std::vector<Expr>> mu_e;    // [j][i]
  std::vector<std::vector<Expr>> nu_e;    // [j][i]

  struct OGroup {
    int comp = 0;                  // 0-based
    std::vector<Expr> h;           // controls (t,x)
    std::vector<Expr> omega;       // weights (x)
    std::vector<std::optional<Expr>> phi;  // targets (t); empty -> twin/manufactured
    std::vector<Expr> F;           // planted/known amplitudes (t); may be zero
    bool has_F = false;
  };
  std::vector<OGroup> groups;

  std::optional<std::vector<Expr>> manufactured_u;
  int twin_refine = 0;  // > 0: build phi from a refined forward run

  // run configuration
  std::string mode = "validate";
  InverseMethod method = InverseMethod::march;
  double tol_picard = 1e-10;
  double tol_outer = 1e-8;
  double tol_compat = 1e-6;
  double gamma0 = -1.0;
  double delta_smallness = 0.5;  // delta for the advisory horizon
  std::string out_dir = ".";
  std::uint64_t seed = 0;

  bool is_manufactured() const { return manufactured_u.has_value(); }
};

Scenario parse_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& origin);

/// Built-in named systems.
SystemSpec preset_system(const std::string& name,
                         const std::map<std::string, double>& params = {});

/// Samples all data onto the grid; derives manufactured or twin targets
/// when the scenario calls for them.
ProblemData build_data(const Scenario& sc, const Grid& g);

struct RunResult {
  int exit_code = 0;  // 0 ok, 2 validation refusal, 3 solver failure
  std::string message;
};

RunResult run_validate(const Scenario& sc, std::ostream& log);
RunResult run_forward(const Scenario& sc, std::ostream& log);
RunResult run_inverse(const Scenario& sc, std::ostream& log);
RunResult run_convergence(const Scenario& sc,
                          const std::vector<std::pair<int, int>>& levels,
                          std::ostream& log);
RunResult run_manufacture(const Scenario& sc, std::ostream& log);

}  // namespace odis
