#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "odis/scenario.hpp"

namespace {

// "64x64,128x128" -> {(64,64),(128,128)}
std::vector<std::pair<int, int>> parse_levels(const std::string& s) {
  std::vector<std::pair<int, int>> levels;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto x = item.find('x');
    if (x == std::string::npos)
      throw CLI::ValidationError("--levels", "expected NxM pairs like 64x64");
    levels.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
  }
  return levels;
}

struct CommonFlags {
  std::string out_dir;
  double tol_picard = -1.0;
  double tol_outer = -1.0;
  double gamma0 = -1.0;
  long long seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--tol-picard", tol_picard, "forward Picard tolerance (X-norm)");
    cmd->add_option("--tol-outer", tol_outer, "outer iteration tolerance (X-norm)");
    cmd->add_option("--gamma0", gamma0, "initial weight exponent for the inverse iteration");
    cmd->add_option("--seed", seed, "seed for randomized probes");
  }

  void apply(odis::Scenario& sc) const {
    if (!out_dir.empty()) sc.out_dir = out_dir;
    if (tol_picard > 0) sc.tol_picard = tol_picard;
    if (tol_outer > 0) sc.tol_outer = tol_outer;
    if (gamma0 > 0) sc.gamma0 = gamma0;
    if (seed >= 0) sc.seed = static_cast<std::uint64_t>(seed);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Direct and inverse source solver for odd-order dispersive systems on "
      "an interval"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string method = "march";
  std::string levels_arg;
  CommonFlags flags;

  auto add_scenario_arg = [&](CLI::App* cmd) {
    cmd->add_option("scenario", scenario_path, "scenario file")->required();
    flags.attach(cmd);
  };

  CLI::App* validate = app.add_subcommand("validate", "run all admissibility checks");
  add_scenario_arg(validate);

  CLI::App* forward = app.add_subcommand("forward", "solve the direct problem");
  add_scenario_arg(forward);

  CLI::App* inverse = app.add_subcommand("inverse", "reconstruct source amplitudes");
  add_scenario_arg(inverse);
  CLI::Option* method_opt =
      inverse->add_option("--method", method, "march | picard")
          ->check(CLI::IsMember({"march", "picard"}));

  CLI::App* convergence =
      app.add_subcommand("convergence", "refinement study on a manufactured case");
  add_scenario_arg(convergence);
  convergence->add_option("--levels", levels_arg, "comma-separated NxM grid levels")
      ->required();

  CLI::App* manufacture =
      app.add_subcommand("manufacture", "derive data from a planted solution");
  add_scenario_arg(manufacture);

  CLI11_PARSE(app, argc, argv);

  try {
    odis::Scenario sc = odis::parse_scenario_file(scenario_path);
    flags.apply(sc);
    odis::RunResult res;
    if (app.got_subcommand(validate)) {
      res = odis::run_validate(sc, std::cout);
    } else if (app.got_subcommand(forward)) {
      res = odis::run_forward(sc, std::cout);
    } else if (app.got_subcommand(inverse)) {
      if (method_opt->count() > 0)
        sc.method = method == "picard" ? odis::InverseMethod::picard
                                       : odis::InverseMethod::march;
      res = odis::run_inverse(sc, std::cout);
    } else if (app.got_subcommand(convergence)) {
      res = odis::run_convergence(sc, parse_levels(levels_arg), std::cout);
    } else {
      res = odis::run_manufacture(sc, std::cout);
    }
    return res.exit_code;
  } catch (const odis::ScenarioError& e) {
    std::cerr << "scenario error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
