#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "odis/scenario.hpp"

using namespace odis;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("odis_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

const char* airy_forward_scn = R"(
name = airy
preset = kdv
system.c = 0            # drop the nonlinearity: pure dispersive equation
grid.R = 1
grid.T = 1
grid.Nx = 48
grid.Nt = 48
manufactured.u_1 = exp(-t)*sin(pi*x)
run.mode = forward
)";

const char* kdv_twin_scn = R"(
name = kdv_twin
preset = kdv
system.c = 0
grid.Nx = 48
grid.Nt = 96
data.h_1_1 = 1
data.F_1_1 = sin(t)
overdet.omega_1_1 = x^2*(1-x)
twin.refine = 2
run.mode = inverse
)";

}  // namespace

TEST_CASE("scenario parsing") {
  SUBCASE("keys, presets and run options") {
    Scenario sc = parse_scenario_text(airy_forward_scn, "inline");
    CHECK(sc.name == "airy");
    CHECK(sc.spec.l == 1);
    CHECK(sc.spec.n == 1);
    CHECK(sc.grid.Nx == 48);
    CHECK(sc.is_manufactured());
    CHECK(sc.mode == "forward");
    CHECK(sc.spec.nonlinearity.is_trivial());
  }
  SUBCASE("parse errors carry line context") {
    CHECK_THROWS_WITH_AS(parse_scenario_text("grid.Nx\n", "f"),
                         doctest::Contains("f:1"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario_text("a = 1\na = 2\n", "f"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario_text("preset = nonsuch\n", "f"),
                    ScenarioError);
    CHECK_THROWS_AS(
        parse_scenario_text("preset = kdv\ndata.u0_1 = sin(\n", "f"),
        ScenarioError);
    CHECK_THROWS_AS(
        parse_scenario_text("preset = kdv\nrun.method = fastest\n", "f"),
        ScenarioError);
  }
  SUBCASE("inline system definition") {
    const char* text = R"(
system.l = 1
system.n = 2
system.a_top = [1, 0.5]
system.a_sub = [0, 0]
nonlinearity.g_1_1 = -(y0_2^2)/2
nonlinearity.g_1_2 = -(y0_1*y0_2)
nonlinearity.b1_1_0_0 = 1
nonlinearity.b2_1_0_0 = 1
)";
    Scenario sc = parse_scenario_text(text, "inline");
    CHECK(sc.spec.n == 2);
    CHECK(sc.spec.a_top[1] == doctest::Approx(0.5));
    CHECK(validate_system(sc.spec).ok());
    CHECK(validate_exponents(sc.spec, ExponentMode::strict).ok());
  }
  SUBCASE("inline lower-order coefficient fields") {
    const char* text = R"(
system.l = 1
system.n = 1
system.a_top = [1]
system.a_sub = [0]
system.coeff_1_1_1 = 0.3*x*(1 + t)
system.coeff_0_1_1 = 0.5
)";
    Scenario sc = parse_scenario_text(text, "inline");
    REQUIRE(sc.spec.lower.size() == 2);
    CHECK(sc.spec.coeff(1, 0, 0).eval(1.0, 0.5) == doctest::Approx(0.3));
    CHECK(sc.spec.coeff(0, 0, 0).eval(0.0, 0.0) == doctest::Approx(0.5));
    CHECK(sc.spec.time_varying());
    CHECK(validate_system(sc.spec).ok());
  }
}

TEST_CASE("bundled presets are admissible") {
  for (const char* name : {"kdv", "kawahara", "majda_biello", "mb_general"}) {
    SystemSpec s = preset_system(name);
    CAPTURE(name);
    CHECK(validate_system(s).ok());
    CHECK(validate_exponents(s, ExponentMode::nonstrict).ok());
  }
  // the general coupled nonlinearity sits at the nonstrict bound
  CHECK_FALSE(
      validate_exponents(preset_system("mb_general"), ExponentMode::strict).ok());
  CHECK(validate_exponents(preset_system("majda_biello"), ExponentMode::strict).ok());
}

TEST_CASE("run_validate accepts a good scenario") {
  Scenario sc = parse_scenario_text(airy_forward_scn, "inline");
  sc.out_dir = temp_dir("validate_ok");
  std::ostringstream log;
  RunResult res = run_validate(sc, log);
  INFO(log.str());
  CHECK(res.exit_code == 0);
}

TEST_CASE("run_validate refusals") {
  SUBCASE("weight violating the endpoint conditions") {
    std::string text = std::string(kdv_twin_scn);
    size_t pos = text.find("overdet.omega_1_1 = x^2*(1-x)");
    text.replace(pos, std::string("overdet.omega_1_1 = x^2*(1-x)").size(),
                 "overdet.omega_1_1 = 1");
    Scenario sc = parse_scenario_text(text, "inline");
    sc.out_dir = temp_dir("validate_weight");
    std::ostringstream log;
    RunResult res = run_validate(sc, log);
    INFO(log.str());
    CHECK(res.exit_code == 2);
    CHECK(log.str().find("FAIL weight") != std::string::npos);
  }
  SUBCASE("proportional controls") {
    const char* text = R"(
name = degenerate
preset = kdv
system.c = 0
grid.Nx = 32
grid.Nt = 16
data.h_1_1 = 1
data.h_2_1 = 2
overdet.omega_1_1 = x^2*(1-x)
overdet.omega_2_1 = x^2*(1-x)^2
overdet.phi_1_1 = 0
overdet.phi_2_1 = 0
)";
    Scenario sc = parse_scenario_text(text, "inline");
    sc.out_dir = temp_dir("validate_prop");
    std::ostringstream log;
    RunResult res = run_validate(sc, log);
    INFO(log.str());
    CHECK(res.exit_code == 2);
    CHECK(log.str().find("degenerate") != std::string::npos);
  }
  SUBCASE("compatibility violation") {
    const char* text = R"(
name = incompatible
preset = kdv
system.c = 0
grid.Nx = 32
grid.Nt = 16
data.h_1_1 = 1
overdet.omega_1_1 = x^2*(1-x)
overdet.phi_1_1 = 0.1 + 0*t
)";
    Scenario sc = parse_scenario_text(text, "inline");
    sc.out_dir = temp_dir("validate_compat");
    std::ostringstream log;
    RunResult res = run_validate(sc, log);
    INFO(log.str());
    CHECK(res.exit_code == 2);
    CHECK(log.str().find("FAIL target compatibility") != std::string::npos);
  }
}

TEST_CASE("run_forward writes the documented files deterministically") {
  Scenario sc = parse_scenario_text(airy_forward_scn, "inline");
  sc.out_dir = temp_dir("forward");
  std::ostringstream log;
  RunResult res = run_forward(sc, log);
  INFO(log.str());
  REQUIRE(res.exit_code == 0);

  fs::path dir(sc.out_dir);
  for (const char* suffix :
       {"_trajectory.csv", "_xnorm.csv", "_energy.csv", "_picard.csv"})
    CHECK(fs::exists(dir / ("airy" + std::string(suffix))));

  std::string traj = slurp(dir / "airy_trajectory.csv");
  CHECK(traj.rfind("t,x,u_1\n", 0) == 0);  // schema header
  std::string energy_header = slurp(dir / "airy_energy.csv").substr(0, 11);
  CHECK(energy_header == "t,energy_1\n");

  // byte-identical on a second run
  std::string first = traj;
  run_forward(sc, log);
  CHECK(slurp(dir / "airy_trajectory.csv") == first);
}

TEST_CASE("run_inverse on a twin scenario recovers the amplitude") {
  Scenario sc = parse_scenario_text(kdv_twin_scn, "inline");
  sc.out_dir = temp_dir("inverse");
  std::ostringstream log;
  RunResult res = run_inverse(sc, log);
  INFO(log.str());
  REQUIRE(res.exit_code == 0);

  fs::path dir(sc.out_dir);
  std::string csv = slurp(dir / "kdv_twin_F.csv");
  CHECK(csv.rfind("t,F_1_1,residual_1_1,err_1_1\n", 0) == 0);
  CHECK(fs::exists(dir / "kdv_twin_diagnostics.json"));
  std::string diag = slurp(dir / "kdv_twin_diagnostics.json");
  CHECK(diag.find("\"delta_min\"") != std::string::npos);
  CHECK(diag.find("\"c0\"") != std::string::npos);
  CHECK(diag.find("\"F_errors\"") != std::string::npos);
}

TEST_CASE("run_convergence guards and fit") {
  Scenario sc = parse_scenario_text(airy_forward_scn, "inline");
  sc.out_dir = temp_dir("conv");
  std::ostringstream log;

  SUBCASE("fewer than 3 levels is refused") {
    RunResult res = run_convergence(sc, {{32, 32}, {64, 64}}, log);
    CHECK(res.exit_code == 2);
  }
  SUBCASE("identical levels are refused") {
    RunResult res =
        run_convergence(sc, {{32, 32}, {32, 32}, {32, 32}}, log);
    CHECK(res.exit_code == 2);
  }
  SUBCASE("three-level study fits a second-order slope") {
    RunResult res =
        run_convergence(sc, {{24, 24}, {48, 48}, {96, 96}}, log);
    INFO(log.str());
    REQUIRE(res.exit_code == 0);
    double order = std::stod(res.message);
    CHECK(order >= 1.7);
    CHECK(order <= 2.3);
    CHECK(fs::exists(fs::path(sc.out_dir) / "airy_convergence.csv"));
    CHECK(fs::exists(fs::path(sc.out_dir) / "airy_convergence.dat"));
  }
}

TEST_CASE("run_manufacture emits the derived case") {
  const char* text = R"(
name = mb_case
preset = majda_biello
grid.Nx = 32
grid.Nt = 32
manufactured.u_1 = 0.05*exp(-t)*sin(pi*x)
manufactured.u_2 = 0.05*cos(t)*x^2*(1-x)^2
data.h_1_1 = 1
data.h_1_2 = 1
data.F_1_1 = 0.05*sin(t)
data.F_1_2 = 0.05*cos(t)
overdet.omega_1_1 = x^2*(1-x)
overdet.omega_1_2 = x^2*(1-x)^2
)";
  Scenario sc = parse_scenario_text(text, "inline");
  sc.out_dir = temp_dir("manufacture");
  std::ostringstream log;
  RunResult res = run_manufacture(sc, log);
  INFO(log.str());
  REQUIRE(res.exit_code == 0);
  fs::path dir(sc.out_dir);
  CHECK(fs::exists(dir / "mb_case_case.json"));
  std::string j = slurp(dir / "mb_case_case.json");
  CHECK(j.find("\"residual\"") != std::string::npos);
  std::string phi = slurp(dir / "mb_case_phi.csv");
  CHECK(phi.rfind("t,phi_1_1,phi_1_2\n", 0) == 0);
}

TEST_CASE("inverse runs export the psi and determinant series") {
  Scenario sc = parse_scenario_text(kdv_twin_scn, "inline");
  sc.out_dir = temp_dir("psi_export");
  std::ostringstream log;
  REQUIRE(run_inverse(sc, log).exit_code == 0);
  std::string psi = slurp(fs::path(sc.out_dir) / "kdv_twin_psi.csv");
  CHECK(psi.rfind("t,psi_1_1_1,delta_1\n", 0) == 0);
}

TEST_CASE("outer divergence surfaces as a solver failure") {
  const char* text = R"(
name = oversized
preset = mb_general
grid.Nx = 32
grid.Nt = 32
manufactured.u_1 = 40*exp(-t)*sin(pi*x)
manufactured.u_2 = 40*cos(t)*x^2*(1-x)^2
data.h_1_1 = 1
data.h_1_2 = 1
data.F_1_1 = 40*sin(t)
data.F_1_2 = 40*cos(t)
overdet.omega_1_1 = x^2*(1-x)
overdet.omega_1_2 = x^2*(1-x)^2
run.mode = inverse
)";
  Scenario sc = parse_scenario_text(text, "inline");
  sc.out_dir = temp_dir("divergence");
  std::ostringstream log;
  RunResult res = run_inverse(sc, log);
  INFO(log.str());
  CHECK(res.exit_code == 3);
}

TEST_CASE("missing targets without a twin or plant are refused") {
  std::string text = std::string(kdv_twin_scn);
  size_t pos = text.find("twin.refine = 2");
  text.replace(pos, std::string("twin.refine = 2").size(), "");
  Scenario sc = parse_scenario_text(text, "inline");
  CHECK_THROWS_AS(build_data(sc, sc.grid), ScenarioError);
}
