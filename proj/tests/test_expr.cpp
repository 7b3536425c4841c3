#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "odis/expr.hpp"

using namespace odis;

TEST_CASE("parse and eval basics") {
  CHECK(Expr::parse("2 + 3*4").eval({}) == doctest::Approx(14.0));
  CHECK(Expr::parse("2^3^2").eval({}) == doctest::Approx(512.0));  // right-assoc
  CHECK(Expr::parse("-x^2").eval({{"x", 3.0}}) == doctest::Approx(-9.0));
  CHECK(Expr::parse("(-2)^3").eval({}) == doctest::Approx(-8.0));
  CHECK(Expr::parse("sin(pi/2)").eval({}) == doctest::Approx(1.0));
  CHECK(Expr::parse("exp(0) + log(1)").eval({}) == doctest::Approx(1.0));
  CHECK(Expr::parse("x^2*(1-x)").eval({{"x", 0.5}}) == doctest::Approx(0.125));
  CHECK(Expr::parse("sqrt(2)^2").eval({}) == doctest::Approx(2.0));
  CHECK(Expr::parse("2*x + t").eval({{"x", 1.5}, {"t", 0.25}}) ==
        doctest::Approx(3.25));
}

TEST_CASE("parse errors carry position context") {
  CHECK_THROWS_AS(Expr::parse("2 +"), ExprError);
  CHECK_THROWS_AS(Expr::parse("foo(1)"), ExprError);
  CHECK_THROWS_AS(Expr::parse("(1 + 2"), ExprError);
  CHECK_THROWS_AS(Expr::parse("1 2"), ExprError);
  CHECK_THROWS_AS(Expr::parse("x").eval({}), ExprError);  // unbound
}

TEST_CASE("differentiation") {
  Expr e = Expr::parse("x^3");
  CHECK(e.diff("x").eval({{"x", 2.0}}) == doctest::Approx(12.0));
  CHECK(e.diff_n("x", 2).eval({{"x", 2.0}}) == doctest::Approx(12.0));
  CHECK(e.diff_n("x", 3).eval({{"x", 2.0}}) == doctest::Approx(6.0));
  CHECK(e.diff_n("x", 4).is_zero());

  Expr s = Expr::parse("sin(2*x)");
  CHECK(s.diff("x").eval({{"x", 0.3}}) == doctest::Approx(2.0 * std::cos(0.6)));

  // third derivative of sin(pi x) is -pi^3 cos(pi x)
  Expr airy = Expr::parse("sin(pi*x)");
  double d3 = airy.diff_n("x", 3).eval({{"x", 0.2}});
  CHECK(d3 == doctest::Approx(-std::pow(M_PI, 3) * std::cos(M_PI * 0.2)));

  Expr prod = Expr::parse("exp(-t)*sin(pi*x)");
  CHECK(prod.diff("t").eval({{"t", 0.5}, {"x", 0.25}}) ==
        doctest::Approx(-std::exp(-0.5) * std::sin(M_PI * 0.25)));

  Expr q = Expr::parse("x/(1+x^2)");
  double x = 0.7;
  double exact = (1 - x * x) / std::pow(1 + x * x, 2);
  CHECK(q.diff("x").eval({{"x", x}}) == doctest::Approx(exact));

  // d/dx of tanh and sqrt
  CHECK(Expr::parse("tanh(x)").diff("x").eval({{"x", 0.4}}) ==
        doctest::Approx(1.0 - std::pow(std::tanh(0.4), 2)));
  CHECK(Expr::parse("sqrt(x)").diff("x").eval({{"x", 4.0}}) ==
        doctest::Approx(0.25));
}

TEST_CASE("substitution composes trees") {
  Expr g = Expr::parse("-(y0_1^2)/2");
  Expr u = Expr::parse("sin(x)");
  Expr composed = g.subst({{"y0_1", u}});
  double x = 0.8;
  CHECK(composed.eval({{"x", x}}) ==
        doctest::Approx(-std::sin(x) * std::sin(x) / 2.0));
  // chain rule through the substitution
  CHECK(composed.diff("x").eval({{"x", x}}) ==
        doctest::Approx(-std::sin(x) * std::cos(x)));
}

TEST_CASE("simplification keeps zero structural") {
  CHECK(Expr::parse("0*sin(x)").is_zero());
  CHECK(Expr::parse("x - x").diff("x").is_zero());  // 1 - 1 folds
  CHECK((Expr::constant(0.0) * Expr::var("x")).is_zero());
  CHECK(Expr::parse("x^0").is_constant());
  CHECK(Expr::parse("1*x + 0").to_string() == "x");
}

TEST_CASE("variables are collected") {
  auto vars = Expr::parse("sin(t)*y0_2 + x").variables();
  CHECK(vars.count("t") == 1);
  CHECK(vars.count("x") == 1);
  CHECK(vars.count("y0_2") == 1);
  CHECK(vars.size() == 3);
}

TEST_CASE("non-integer powers differentiate via exp/log") {
  Expr e = Expr::parse("x^2.5");
  CHECK(e.diff("x").eval({{"x", 2.0}}) ==
        doctest::Approx(2.5 * std::pow(2.0, 1.5)));
  Expr general = Expr::parse("x^t");
  double v = general.diff("t").eval({{"t", 2.0}, {"x", 3.0}});
  CHECK(v == doctest::Approx(std::pow(3.0, 2.0) * std::log(3.0)));
}
