#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncmfg/coupling.hpp"
#include "ncmfg/errors.hpp"

#include <cmath>

using namespace ncmfg;

namespace {

CouplingSpec spec(const std::string& V, const std::string& G = "0")
{
  return CouplingSpec{Expression::parse(V), BumpKernel(0.5, 2), Expression::parse(G), BumpKernel(0.5, 2), {}};
}

ParticleMeasure two_points(double t, double shift = 0.0)
{
  return ParticleMeasure({make_vec({0.0 + shift, 0.0}), make_vec({0.3 + shift, 0.1})}, t, "test");
}

}  // namespace

TEST_CASE("mollified density of a cloud")
{
  const BumpKernel k(0.5, 2);
  const auto m = two_points(0.0);
  const Vec x = make_vec({0.1, 0.05});
  const double exact = 0.5 * (k.value(x - m[0]) + k.value(x - m[1]));
  CHECK(mollified_density(m, k, x) == doctest::Approx(exact).epsilon(1e-15));
  const Vec g = mollified_density_gradient(m, k, x);
  CHECK((g - 0.5 * (k.gradient(x - m[0]) + k.gradient(x - m[1]))).norm() < 1e-14);
}

TEST_CASE("F and G evaluation")
{
  const auto s = spec("0.1*z + x1*t", "x2 + z");
  const auto m = two_points(0.0);
  const Vec x = make_vec({0.2, 0.4});
  const double z = mollified_density(m, s.rho, x);
  CHECK(eval_F(s, x, 0.5, m) == doctest::Approx(0.1 * z + 0.1).epsilon(1e-14));
  CHECK(eval_G(s, x, m) == doctest::Approx(0.4 + mollified_density(m, s.rho_g, x)).epsilon(1e-14));
  CHECK(s.running_depends_on_measure());
  CHECK_FALSE(spec("x1").depends_on_measure());
}

TEST_CASE("measure-independent costs are closed-form fields")
{
  const auto s = spec("x1^2", "x2");
  const auto f = running_cost_field(s, {two_points(0.0)}, 2);
  CHECK(dynamic_cast<const ExprField*>(f.get()) != nullptr);
  const auto g = terminal_cost_field(spec("0", "z"), two_points(1.0), 2);
  CHECK(dynamic_cast<const CouplingField*>(g.get()) != nullptr);
}

TEST_CASE("coupling field interpolates linearly in time")
{
  const auto s = spec("z");
  const CouplingField f(s.V, s.rho, {two_points(0.0), two_points(1.0, 0.2)});
  const Vec x = make_vec({0.15, 0.0});
  const double a = mollified_density(two_points(0.0), s.rho, x);
  const double b = mollified_density(two_points(1.0, 0.2), s.rho, x);
  CHECK(f.value(x, 0.0) == doctest::Approx(a).epsilon(1e-15));
  CHECK(f.value(x, 0.25) == doctest::Approx(0.75 * a + 0.25 * b).epsilon(1e-14));
  CHECK(f.value(x, 3.0) == doctest::Approx(b).epsilon(1e-15));
}

TEST_CASE("coupling field gradient and tabulation")
{
  const auto s = spec("0.5*z^2 + sin(x2)*z");
  CouplingField f(s.V, s.rho, {two_points(0.0), two_points(0.5, -0.1)});
  const Vec x = make_vec({0.1, 0.2});
  const Vec g = f.gradient(x, 0.3);
  const double h = 1e-6;
  for (int a = 0; a < 2; ++a) {
    Vec e = Vec::Zero(2);
    e[a] = h;
    CHECK(g[a] == doctest::Approx((f.value(x + e, 0.3) - f.value(x - e, 0.3)) / (2 * h)).epsilon(1e-6));
  }
  const BoxGrid grid(Box{make_vec({-1, -1}), make_vec({1, 1})}, 0.125);
  std::vector<double> tab(grid.size());
  f.tabulate(grid, 0.3, tab);
  for (std::size_t n = 0; n < grid.size(); n += 37)
    CHECK(tab[n] == doctest::Approx(f.value(grid.node(n), 0.3)).epsilon(1e-13));
  f.attach_grid(grid);
  std::vector<double> tab2(grid.size());
  f.tabulate(grid, 0.3, tab2);
  for (std::size_t n = 0; n < grid.size(); ++n) CHECK(tab2[n] == doctest::Approx(tab[n]).epsilon(1e-12));
  const CouplingField plain(s.V, s.rho, {two_points(0.0), two_points(0.5, -0.1)});
  CHECK(f.value(grid.node(100), 0.5) == doctest::Approx(plain.value(grid.node(100), 0.5)).epsilon(1e-12));
}

TEST_CASE("gridded coupling needs uniform snapshot times")
{
  const auto s = spec("z");
  CouplingField f(s.V, s.rho, {two_points(0.0), two_points(0.5), two_points(0.7)});
  CHECK_THROWS_AS(f.attach_grid(BoxGrid(Box{make_vec({-1, -1}), make_vec({1, 1})}, 0.25)), ContractError);
  CHECK_THROWS_AS(CouplingField(s.V, s.rho, {two_points(0.5), two_points(0.5)}), ContractError);
}

TEST_CASE("C2 certification")
{
  const Box box{make_vec({-1, -1}), make_vec({1, 1})};
  const auto c = c2_certify(spec("0.1*z + 0.5*x1^2", "0.5*(x1^2 + x2^2)"), box, {0.0, 1.0}, {two_points(0.0)});
  CHECK(c.bound == std::max(c.F, c.G));
  CHECK(c.F >= 1.0 - 1e-9);
  CHECK(c.G >= 1.0 - 1e-9);
  CHECK_THROWS_AS(c2_certify(spec("sqrt(sqrt(x1^2))"), box, {0.0}, {two_points(0.0)}), CertificationError);
  CHECK_THROWS_AS(c2_certify(spec("x1"), box, {0.0}, {}), ContractError);
}
