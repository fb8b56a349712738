#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncmfg/dual.hpp"
#include "ncmfg/errors.hpp"
#include "ncmfg/expr.hpp"
#include "ncmfg/linalg.hpp"

#include <array>
#include <cmath>

using namespace ncmfg;

namespace {

double at(const std::string& text, double x1 = 0.0, double x2 = 0.0, double t = 0.0, double z = 0.0)
{
  const std::array<double, kNumSlots> s{x1, x2, 0.0, 0.0, t, z};
  return Expression::parse(text)(s);
}

}  // namespace

TEST_CASE("precedence and associativity")
{
  CHECK(at("1 + 2*3") == 7.0);
  CHECK(at("(1 + 2)*3") == 9.0);
  CHECK(at("2^3^2") == 512.0);
  CHECK(at("-2^2") == -4.0);
  CHECK(at("8/4/2") == 1.0);
  CHECK(at("1 - 2 - 3") == -4.0);
}

TEST_CASE("variables and functions")
{
  CHECK(at("x1*x2 + t + z", 2.0, 3.0, 0.5, 0.25) == doctest::Approx(6.75).epsilon(1e-15));
  CHECK(at("sin(pi/2)", 0.0) == doctest::Approx(1.0));
  CHECK(at("sqrt(x1)", 9.0) == 3.0);
  CHECK(at("exp(0)", 0.0) == 1.0);
  CHECK(at("cos(x1)", 0.3) == doctest::Approx(std::cos(0.3)).epsilon(1e-15));
}

TEST_CASE("cutoff is a smooth step")
{
  CHECK(at("cutoff(x1, 1, 2)", 0.5) == 1.0);
  CHECK(at("cutoff(x1, 1, 2)", 2.5) == 0.0);
  CHECK(at("cutoff(x1, 1, 2)", 1.5) == doctest::Approx(0.5).epsilon(1e-14));
  const double lo = at("cutoff(x1, 1, 2)", 1.2), hi = at("cutoff(x1, 1, 2)", 1.8);
  CHECK(lo + hi == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("slot usage")
{
  const auto e = Expression::parse("0.1*z + x2");
  CHECK(e.uses(kSlotZ));
  CHECK_FALSE(e.uses(kSlotT));
  CHECK(e.max_x_index() == 2);
  CHECK(Expression::parse("3").is_constant());
}

TEST_CASE("dual evaluation matches the analytic derivative")
{
  using D = Dual<kMaxDim + 1>;
  const auto e = Expression::parse("sin(x1)*x2^2 + sqrt(1 + x1^2)");
  std::array<D, kNumSlots> s{};
  s[0] = D::variable(0.7, 0);
  s[1] = D::variable(-1.3, 1);
  const D r = e.eval<D>(s);
  CHECK(r.v == doctest::Approx(std::sin(0.7) * 1.69 + std::sqrt(1.49)).epsilon(1e-14));
  CHECK(r.d[0] == doctest::Approx(std::cos(0.7) * 1.69 + 0.7 / std::sqrt(1.49)).epsilon(1e-14));
  CHECK(r.d[1] == doctest::Approx(2.0 * std::sin(0.7) * -1.3).epsilon(1e-14));
}

TEST_CASE("malformed input")
{
  CHECK_THROWS_AS(Expression::parse("1 +"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("x5"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("foo(1)"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse("(1"), ExpressionError);
  CHECK_THROWS_AS(Expression::parse(""), ExpressionError);
}
