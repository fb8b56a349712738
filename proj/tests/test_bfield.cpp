#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncmfg/bfield.hpp"
#include "ncmfg/errors.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/grid.hpp"

#include <cmath>
#include <numbers>

using namespace ncmfg;
using std::numbers::pi;

TEST_CASE("matrix of the Grushin field")
{
  const BField b = BField::grushin("sin(x1)");
  const Mat m1 = b.matrix(make_vec({pi / 2, 0.0}));
  CHECK(m1(0, 0) == 1.0);
  CHECK(m1(0, 1) == 0.0);
  CHECK(m1(1, 0) == 0.0);
  CHECK(m1(1, 1) == 1.0);
  const Mat m2 = b.matrix(make_vec({0.0, 7.0}));
  CHECK(m2(1, 1) == 0.0);
  CHECK(m2(0, 0) == 1.0);
  const Mat id = BField::identity(2).matrix(make_vec({3.0, -5.0}));
  CHECK(id.isIdentity(0.0));
}

TEST_CASE("domain violations")
{
  BField b = BField::grushin("sin(x1)");
  b.set_domain(Box{make_vec({-1, -1}), make_vec({1, 1})});
  CHECK_NOTHROW(b.eval_matrix(make_vec({0.5, 0.5})));
  CHECK_THROWS_AS(b.eval_matrix(make_vec({1.5, 0.0})), OutOfDomainError);
}

TEST_CASE("shape and dependency rules")
{
  CHECK_THROWS_AS(BField::from_strings(2, {{"1"}, {"0", "x2"}}), ConfigError);
  CHECK_THROWS_AS(BField::from_strings(2, {{"x1"}, {"0", "1"}}), ConfigError);
  CHECK_THROWS_AS(BField::from_strings(2, {{"0"}, {"0", "1"}}), ConfigError);
  CHECK_THROWS_AS(BField::from_strings(2, {{"1"}}), ConfigError);
  CHECK_NOTHROW(BField::from_strings(3, {{"2"}, {"x1", "1"}, {"sin(x2)", "x1", "cos(x1*x2)"}}));
}

TEST_CASE("hamiltonian examples")
{
  const BField id = BField::identity(2);
  const BField g = BField::grushin("sin(x1)");
  CHECK(hamiltonian(id, make_vec({0.3, 0.1}), make_vec({3, 4})) == 12.5);
  CHECK(hamiltonian(g, make_vec({0.0, 0.4}), make_vec({0, 5})) == 0.0);
  CHECK(hamiltonian(g, make_vec({pi / 6, 0.0}), make_vec({1, 2})) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dp_hamiltonian examples and degeneracy")
{
  const BField g = BField::grushin("sin(x1)");
  const Vec a = dp_hamiltonian(g, make_vec({pi / 2, 0.0}), make_vec({1, 2}));
  CHECK(a[0] == 1.0);
  CHECK(a[1] == doctest::Approx(2.0).epsilon(1e-15));
  const Vec z = dp_hamiltonian(g, make_vec({0.0, 3.0}), make_vec({1, 2}));
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
  for (double p2 : {-7.0, 0.1, 1e6}) CHECK(dp_hamiltonian(g, make_vec({0.0, 1.0}), make_vec({2.0, p2}))[1] == 0.0);
  const Vec i = dp_hamiltonian(BField::identity(2), make_vec({0.2, 0.2}), make_vec({3, 4}));
  CHECK(i[0] == 3.0);
  CHECK(i[1] == 4.0);
}

TEST_CASE("literal identities and finite differences in p")
{
  const BField b = BField::from_strings(3, {{"1"}, {"0.5*x1", "1"}, {"-0.5*sin(x2)", "0.5*sin(x1)", "1 + 0.1*x2"}});
  const double eps = 1e-4;
  for (int k = 0; k < 20; ++k) {
    const Vec x = make_vec({std::sin(1.3 * k), std::cos(0.7 * k), 0.1 * k - 1.0});
    const Vec p = make_vec({std::cos(2.1 * k), 0.5 - 0.05 * k, std::sin(0.9 * k)});
    const Mat B = b.matrix(x);
    const Vec pb = B.transpose() * p;
    CHECK(hamiltonian(b, x, p) == doctest::Approx(0.5 * pb.squaredNorm()).epsilon(1e-14));
    const Vec dp = dp_hamiltonian(b, x, p);
    const Vec lit = B * pb;
    for (int a = 0; a < 3; ++a) {
      CHECK(dp[a] == doctest::Approx(lit[a]).epsilon(1e-14));
      Vec e = Vec::Zero(3);
      e[a] = eps;
      const double fd = (hamiltonian(b, x, p + e) - hamiltonian(b, x, p - e)) / (2 * eps);
      CHECK(std::abs(fd - dp[a]) <= 1e-6 * std::max(1.0, std::abs(dp[a])));
    }
  }
}

TEST_CASE("x-gradient of the Hamiltonian against the Grushin closed form")
{
  const BField g = BField::grushin("sin(x1)");
  const Vec x = make_vec({0.4, -0.2}), p = make_vec({0.3, 1.7});
  const Vec d = g.grad_x_half_norm_sq(x, p);
  CHECK(d[0] == doctest::Approx(std::sin(0.4) * std::cos(0.4) * 1.7 * 1.7).epsilon(1e-14));
  CHECK(d[1] == 0.0);
}

TEST_CASE("b_gradient examples")
{
  const BField g = BField::grushin("sin(x1)");
  const ExprField x2(Expression::parse("x2"), 2), x1(Expression::parse("x1"), 2);
  const Vec a = b_gradient(x2, g, make_vec({pi / 2, 0.3}));
  CHECK(a[0] == 0.0);
  CHECK(a[1] == doctest::Approx(1.0).epsilon(1e-15));
  const Vec b = b_gradient(x1, g, make_vec({0.3, 0.3}));
  CHECK(b[0] == 1.0);
  CHECK(b[1] == 0.0);
  const Vec c = b_gradient(x2, g, make_vec({0.0, 0.3}));
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);
}

TEST_CASE("gridded b_gradient and stencil errors")
{
  const BField g = BField::grushin("sin(x1)");
  const BoxGrid grid(Box{make_vec({-1, -1}), make_vec({1, 1})}, 0.05);
  std::vector<double> v(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) v[n] = grid.node(n)[1];
  const Vec a = b_gradient(grid, v, g, make_vec({0.5, 0.1}));
  CHECK(a[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(std::sin(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(b_gradient(grid, v, g, make_vec({0.99, 0.0})), StencilError);
}

TEST_CASE("b_divergence examples")
{
  const BField g = BField::grushin("sin(x1)");
  const Vec x = make_vec({pi / 2, 0.4});
  CHECK(b_divergence([](const Vec& y) { return make_vec({y[0], 0.0}); }, g, x) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(b_divergence([](const Vec& y) { return make_vec({0.0, y[1]}); }, g, x) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(b_divergence([](const Vec&) { return make_vec({2.0, -3.0}); }, g, x)) < 1e-12);
}

TEST_CASE("b_differentiability probe")
{
  const BField g = BField::grushin("sin(x1)");
  const std::vector<double> radii{1e-2, 1e-3, 1e-4};
  SUBCASE("linear in x1")
  {
    const auto r = b_differentiability_probe([](const Vec& y) { return y[0]; }, BField::identity(2),
                                             make_vec({0.2, 0.3}), radii);
    CHECK(r.rho[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(r.rho[1]) < 1e-9);
    for (double e : r.residuals) CHECK(e < 1e-9);
  }
  SUBCASE("smooth quadratic recovers Du.B")
  {
    auto u = [](const Vec& y) { return 0.5 * y[0] * y[0] + y[0] * y[1] + 2.0 * y[1] * y[1]; };
    const Vec x = make_vec({0.6, -0.3});
    const Vec du = make_vec({x[0] + x[1], x[0] + 4.0 * x[1]});
    const Vec exact = (du.transpose() * g.matrix(x)).transpose();
    const auto r = b_differentiability_probe(u, g, x, radii);
    CHECK((r.rho - exact).norm() < 1e-3);
    CHECK(r.residuals.back() < r.residuals.front());
  }
  SUBCASE("kink in a non-degenerate direction")
  {
    const auto r = b_differentiability_probe([](const Vec& y) { return std::abs(y[0]); }, g,
                                             make_vec({0.0, 0.2}), radii);
    for (double e : r.residuals) CHECK(e > 0.1);
  }
  SUBCASE("degenerate point")
  {
    const auto r = b_differentiability_probe([](const Vec& y) { return y[1]; },
                                             BField::grushin("x1"), make_vec({0.0, 0.2}), radii);
    CHECK(r.residuals.size() == radii.size());
    CHECK(r.rho.norm() < 1e-3);
  }
  SUBCASE("all increments vanish")
  {
    const auto r = b_differentiability_probe([](const Vec& y) { return y[1]; }, BField::grushin("0"),
                                             make_vec({0.3, 0.2}), radii);
    CHECK(r.degenerate);
    CHECK_FALSE(r.undetermined[0]);
    CHECK(r.undetermined[1]);
    CHECK(std::isnan(r.rho[1]));
    CHECK(r.rho[0] == 0.0);
  }
}

TEST_CASE("c2 bound by sampling")
{
  const BField g = BField::grushin("sin(x1)");
  const double c = g.estimate_c2_bound(Box{make_vec({-2, -2}), make_vec({2, 2})}, 41);
  CHECK(c >= 1.0 - 1e-3);
  CHECK(c <= 1.0 + 1e-9);
}
