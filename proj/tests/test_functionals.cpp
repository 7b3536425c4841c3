#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "odis/functionals.hpp"
#include "odis/manufactured.hpp"
#include "odis/scenario.hpp"

using namespace odis;

namespace {

SystemSpec airy_spec() {
  SystemSpec s;
  s.l = 1;
  s.n = 1;
  s.a_top = {1.0};
  s.a_sub = {0.0};
  s.nonlinearity = NonlinearitySpec::trivial(1, 1);
  return s;
}

// max_t |q(t) - q(0) - int_0^t r dtau| for a linear forward run
double identity_defect(const SystemSpec& spec, const ManufacturedCase& mc,
                       const Weight& w, const Grid& g) {
  SourceBundle src;
  src.f = mc.data.h0;
  Trajectory traj =
      solve_linear_forward(spec, mc.data.u0, mc.data.mu, mc.data.nu, src, g);
  TimeSeries q = q_functional(traj, 0, w, g);
  TimeSeries r = r_functional(spec, traj, mc.data.mu, mc.data.nu, src, 0, w, g);
  double worst = 0.0;
  double integral = 0.0;
  for (int m = 1; m < g.steps(); ++m) {
    integral += 0.5 * g.dt() * (r.v[m - 1] + r.v[m]);
    worst = std::max(worst, std::abs(q.v[m] - q.v[0] - integral));
  }
  return worst;
}

}  // namespace

TEST_CASE("q functional closed forms") {
  Grid g{1.0, 1.0, 128, 8};
  Weight w = Weight::analytic(Expr::parse("x^2*(1-x)"));
  SUBCASE("zero state") {
    Trajectory z = Trajectory::zeros(g, 1);
    TimeSeries q = q_functional(z, 0, w, g);
    for (double v : q.v) CHECK(v == 0.0);
  }
  SUBCASE("unit state integrates the weight: 1/12") {
    Trajectory one = Trajectory::zeros(g, 1);
    for (auto& step : one.u)
      for (auto& comp : step) std::fill(comp.begin(), comp.end(), 1.0);
    TimeSeries q = q_functional(one, 0, w, g);
    for (double v : q.v) CHECK(v == doctest::Approx(1.0 / 12.0).epsilon(1e-4));
  }
  SUBCASE("linear in the trajectory") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Trajectory a = Trajectory::zeros(g, 1);
    Trajectory b = Trajectory::zeros(g, 1);
    for (int m = 0; m < g.steps(); ++m)
      for (int k = 0; k < g.points(); ++k) {
        a.u[m][0][k] = dist(rng);
        b.u[m][0][k] = dist(rng);
      }
    Trajectory sum = a;
    for (int m = 0; m < g.steps(); ++m)
      for (int k = 0; k < g.points(); ++k) sum.u[m][0][k] += b.u[m][0][k];
    TimeSeries qa = q_functional(a, 0, w, g);
    TimeSeries qb = q_functional(b, 0, w, g);
    TimeSeries qs = q_functional(sum, 0, w, g);
    for (int m = 0; m < g.steps(); ++m)
      CHECK(qs.v[m] == doctest::Approx(qa.v[m] + qb.v[m]).epsilon(1e-12));
  }
}

TEST_CASE("r functional: zero inputs give zero") {
  Grid g{1.0, 1.0, 64, 8};
  SystemSpec spec = airy_spec();
  Weight w = Weight::analytic(Expr::parse("x^2*(1-x)"));
  Trajectory z = Trajectory::zeros(g, 1);
  std::vector<std::vector<TimeSeries>> mu(1, {TimeSeries::zeros(g)});
  std::vector<std::vector<TimeSeries>> nu(2, {TimeSeries::zeros(g)});
  SourceBundle src;
  TimeSeries r = r_functional(spec, z, mu, nu, src, 0, w, g);
  for (double v : r.v) CHECK(v == 0.0);
}

TEST_CASE("r functional: single surviving trace term") {
  // l=1, a3=1, a2=0, u=0, f=G=0, nu_1 = 1, omega = x^2(1-x):
  // r = nu_1 a3 omega'(R) = -1
  Grid g{1.0, 1.0, 64, 8};
  SystemSpec spec = airy_spec();
  Weight w = Weight::analytic(Expr::parse("x^2*(1-x)"));
  Trajectory z = Trajectory::zeros(g, 1);
  std::vector<std::vector<TimeSeries>> mu(1, {TimeSeries::zeros(g)});
  std::vector<std::vector<TimeSeries>> nu(2, {TimeSeries::zeros(g)});
  for (auto& v : nu[1][0].v) v = 1.0;
  SourceBundle src;
  TimeSeries r = r_functional(spec, z, mu, nu, src, 0, w, g);
  for (double v : r.v) CHECK(v == doctest::Approx(-1.0));
}

TEST_CASE("keystone: q' = r on linear forward solves, order >= 2") {
  SystemSpec spec = airy_spec();
  ManufacturedInput in;
  in.u_star = {Expr::parse("exp(-t)*sin(pi*x)")};
  Weight w = Weight::analytic(Expr::parse("x^2*(1-x)"));

  auto defect_at = [&](int N) {
    Grid g{1.0, 1.0, N, N};
    ManufacturedCase mc = generate_manufactured(spec, g, in);
    return identity_defect(spec, mc, w, g);
  };
  double d1 = defect_at(48);
  double d2 = defect_at(96);
  double rate = std::log2(d1 / d2);
  INFO("defects ", d1, " ", d2, " rate ", rate);
  CHECK(rate >= 1.7);
}

TEST_CASE("keystone with lower-order coefficients and l=2") {
  // nonzero a_3(t,x), a_1, a_0 exercise the product kernels and the
  // lower-order boundary blocks of the identity
  SystemSpec spec;
  spec.l = 2;
  spec.n = 1;
  spec.a_top = {1.0};
  spec.a_sub = {-0.5};
  spec.lower.assign(4, {CoeffField::zero()});
  spec.lower[3][0] = CoeffField::analytic(Expr::parse("0.3 + 0.1*x"));
  spec.lower[1][0] = CoeffField::analytic(Expr::parse("0.2*x^2"));
  spec.lower[0][0] = CoeffField::analytic(Expr::parse("0.5"));
  spec.nonlinearity = NonlinearitySpec::trivial(2, 1);

  ManufacturedInput in;
  in.u_star = {Expr::parse("0.5*exp(-t)*sin(pi*x)^2")};
  Weight w = Weight::analytic(Expr::parse("x^3*(1-x)^2"));

  auto defect_at = [&](int N) {
    Grid g{1.0, 1.0, N, N};
    ManufacturedCase mc = generate_manufactured(spec, g, in);
    return identity_defect(spec, mc, w, g);
  };
  double d1 = defect_at(48);
  double d2 = defect_at(96);
  double rate = std::log2(d1 / d2);
  INFO("defects ", d1, " ", d2, " rate ", rate);
  CHECK(rate >= 1.5);
}

TEST_CASE("negative control: the identity fails for an inadmissible weight") {
  SystemSpec spec = airy_spec();
  ManufacturedInput in;
  // asymmetric curvature at the endpoints, so the boundary terms dropped by
  // a weight violating the endpoint conditions are actually nonzero
  in.u_star = {Expr::parse("exp(-t)*(sin(pi*x) + 0.5*x^3)")};
  Grid g{1.0, 1.0, 96, 96};
  ManufacturedCase mc = generate_manufactured(spec, g, in);

  Weight good = Weight::analytic(Expr::parse("x^2*(1-x)"));
  Weight bad = Weight::analytic(Expr::parse("1"));  // violates the endpoint conditions
  double dg = identity_defect(spec, mc, good, g);
  double db = identity_defect(spec, mc, bad, g);
  INFO("good ", dg, " bad ", db);
  CHECK(db >= 100.0 * dg);
}

TEST_CASE("sampled weight: identity holds with finite-difference derivatives") {
  // x^2(1-x) is cubic, so the width-5 stencils differentiate the samples
  // exactly and the defect matches the analytic weight
  SystemSpec spec = airy_spec();
  ManufacturedInput in;
  in.u_star = {Expr::parse("exp(-t)*sin(pi*x)")};
  Grid g{1.0, 1.0, 64, 64};
  ManufacturedCase mc = generate_manufactured(spec, g, in);

  Field samples(g.points());
  for (int k = 0; k < g.points(); ++k) {
    double x = g.x(k);
    samples[k] = x * x * (1.0 - x);
  }
  double d_sampled = identity_defect(spec, mc, Weight::sampled(samples), g);
  double d_analytic =
      identity_defect(spec, mc, Weight::analytic(Expr::parse("x^2*(1-x)")), g);
  CHECK(d_sampled == doctest::Approx(d_analytic).epsilon(1e-6));
}

TEST_CASE("sampled weights are rejected for l > 1") {
  Grid g{1.0, 1.0, 32, 8};
  SystemSpec spec;
  spec.l = 2;
  spec.n = 1;
  spec.a_top = {1.0};
  spec.a_sub = {0.0};
  spec.nonlinearity = NonlinearitySpec::trivial(2, 1);
  Field samples(g.points(), 0.0);
  CHECK_THROWS_AS(RFunctional(spec, 0, Weight::sampled(samples), g),
                  SolverError);
}

TEST_CASE("psi matrix") {
  Grid g{1.0, 1.0, 256, 8};
  SUBCASE("single control against x^2(1-x): psi = det = 1/12") {
    ProblemData d = ProblemData::zeros(g, 1, 1);
    InverseGroup grp;
    grp.comp = 0;
    grp.h.push_back(std::vector<Field>(g.steps(), Field(g.points(), 1.0)));
    grp.omega.push_back(Weight::analytic(Expr::parse("x^2*(1-x)")));
    grp.phi.push_back(TimeSeries::zeros(g));
    grp.phi_prime.emplace_back();
    d.groups.push_back(grp);
    PsiMatrix psi = psi_matrix(d, g);
    CHECK(psi.blocks[0].mats[0][0] == doctest::Approx(1.0 / 12).epsilon(1e-4));
    CHECK(psi.delta_min == doctest::Approx(1.0 / 12).epsilon(1e-4));
    CHECK(psi.psi0 == doctest::Approx(1.0 / 12).epsilon(1e-4));
  }
  SUBCASE("control normalized against the weight gives the identity") {
    ProblemData d = ProblemData::zeros(g, 1, 1);
    InverseGroup grp;
    grp.comp = 0;
    grp.h.push_back(std::vector<Field>(g.steps(), Field(g.points(), 12.0)));
    grp.omega.push_back(Weight::analytic(Expr::parse("x^2*(1-x)")));
    grp.phi.push_back(TimeSeries::zeros(g));
    grp.phi_prime.emplace_back();
    d.groups.push_back(grp);
    PsiMatrix psi = psi_matrix(d, g);
    CHECK(psi.blocks[0].det[0] == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("proportional controls are degenerate") {
    ProblemData d = ProblemData::zeros(g, 1, 1);
    InverseGroup grp;
    grp.comp = 0;
    grp.h.push_back(std::vector<Field>(g.steps(), Field(g.points(), 1.0)));
    grp.h.push_back(std::vector<Field>(g.steps(), Field(g.points(), 2.0)));
    grp.omega.push_back(Weight::analytic(Expr::parse("x^2*(1-x)")));
    grp.omega.push_back(Weight::analytic(Expr::parse("x^2*(1-x)^2")));
    grp.phi.assign(2, TimeSeries::zeros(g));
    grp.phi_prime.resize(2);
    d.groups.push_back(grp);
    CHECK_THROWS_AS(psi_matrix(d, g), DegeneracyError);
  }
}

TEST_CASE("per-time source system") {
  SUBCASE("scalar division") {
    std::vector<double> psi{1.0 / 12.0};
    std::vector<double> z{0.5};
    auto F = cramer_source_step(psi, 1, z, 1e-12);
    CHECK(F[0] == doctest::Approx(6.0));
  }
  SUBCASE("identity matrix returns the data") {
    std::vector<double> psi{1, 0, 0, 1};
    std::vector<double> z{3.5, -2.0};
    auto F = cramer_source_step(psi, 2, z, 1e-12);
    CHECK(F[0] == doctest::Approx(3.5));
    CHECK(F[1] == doctest::Approx(-2.0));
  }
  SUBCASE("hand-solved 2x2") {
    std::vector<double> psi{2, 1, 1, 1};
    std::vector<double> z{3, 2};
    auto F = cramer_source_step(psi, 2, z, 1e-12);
    CHECK(F[0] == doctest::Approx(1.0));
    CHECK(F[1] == doctest::Approx(1.0));
    auto lit = cramer_quotients(psi, 2, z);
    CHECK(lit[0] == doctest::Approx(1.0));
    CHECK(lit[1] == doctest::Approx(1.0));
  }
  SUBCASE("determinant below threshold is refused") {
    std::vector<double> psi{1, 2, 2, 4};
    std::vector<double> z{1, 2};
    CHECK_THROWS_AS(cramer_source_step(psi, 2, z, 1e-12), DegeneracyError);
  }
}

TEST_CASE("pivoted solve matches the literal determinant quotients") {
  std::mt19937_64 rng(20240917);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int m = 1 + static_cast<int>(rng() % 5);
    std::vector<double> psi(m * m);
    for (auto& v : psi) v = dist(rng);
    for (int i = 0; i < m; ++i) psi[i * m + i] += 2.0;  // keep well conditioned
    std::vector<double> z(m);
    for (auto& v : z) v = dist(rng);
    auto a = cramer_source_step(psi, m, z, 1e-12);
    auto b = cramer_quotients(psi, m, z);
    for (int i = 0; i < m; ++i) {
      CHECK(std::abs(a[i] - b[i]) <= 1e-12 * std::max(1.0, std::abs(b[i])));
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("dense determinant closed form matches cofactor expansion") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> a2{dist(rng), dist(rng), dist(rng), dist(rng)};
  CHECK(dense_det(a2, 2) == doctest::Approx(a2[0] * a2[3] - a2[1] * a2[2]));
  auto laplace3 = [&](std::span<const double> m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  };
  std::vector<double> a3(9);
  for (auto& v : a3) v = dist(rng);
  CHECK(dense_det(a3, 3) == doctest::Approx(laplace3(a3)));
}
