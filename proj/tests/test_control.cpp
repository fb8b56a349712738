#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/errors.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/grid.hpp"

#include <cmath>

using namespace ncmfg;

namespace {

// identity dynamics, f = 0, g = 1/2 |x - c|^2: the optimal control is constant
// and the value is |x0 - c|^2 / (2 (1 + T - t)).
struct QuadraticProblem {
  Vec c = make_vec({0.4, -0.3});
  BField b = BField::identity(2);
  FieldPtr f = constant_field(0.0);
  FieldPtr g = expr_field("0.5*((x1 - 0.4)^2 + (x2 + 0.3)^2)", 2);
  double value(const Vec& x0, double t, double T) const { return (x0 - c).squaredNorm() / (2.0 * (1.0 + T - t)); }
};

}  // namespace

TEST_CASE("control paths")
{
  const auto a = ControlPath::constant(make_vec({1.0, 2.0}), 0.0, 1.0, 4);
  CHECK(a.segments() == 4);
  CHECK(a.at(0.6)[1] == 2.0);
  CHECK(a.l2_squared() == doctest::Approx(5.0).epsilon(1e-15));
  const auto p = ControlPath::piecewise({make_vec({1.0, 0.0}), make_vec({0.0, -2.0})}, 0.0, 2.0);
  CHECK(p.at(0.5)[0] == 1.0);
  CHECK(p.at(1.5)[1] == -2.0);
  CHECK(p.l2_squared() == doctest::Approx(1.0 + 4.0).epsilon(1e-15));
}

TEST_CASE("constant controls under identity dynamics")
{
  const auto a = ControlPath::constant(make_vec({0.5, -1.5}), 0.25, 1.0, 3);
  const auto tr = integrate_dynamics(make_vec({0.1, 0.2}), a, BField::identity(2));
  CHECK(tr.states.back()[0] == doctest::Approx(0.1 + 0.5 * 0.75).epsilon(1e-14));
  CHECK(tr.states.back()[1] == doctest::Approx(0.2 - 1.5 * 0.75).epsilon(1e-14));
  CHECK(tr.times.back() == 1.0);
}

TEST_CASE("Grushin closed forms")
{
  const BField g = BField::grushin("sin(x1)");
  const auto e1 = integrate_dynamics(make_vec({0.2, 0.5}), ControlPath::constant(make_vec({1.0, 0.0}), 0.0, 1.0), g);
  CHECK(e1.states.back()[0] == doctest::Approx(1.2).epsilon(1e-14));
  CHECK(e1.states.back()[1] == 0.5);
  const auto e2 = integrate_dynamics(make_vec({0.2, 0.5}), ControlPath::constant(make_vec({0.0, 1.0}), 0.0, 1.0), g);
  CHECK(e2.states.back()[0] == 0.2);
  CHECK(e2.states.back()[1] == doctest::Approx(0.5 + std::sin(0.2)).epsilon(1e-14));
  // x1 = s, x2' = sin(s) a2: x2(1) = x2(0) + (1 - cos 1)
  const auto e3 = integrate_dynamics(make_vec({0.0, 0.0}), ControlPath::constant(make_vec({1.0, 1.0}), 0.0, 1.0), g, 64);
  CHECK(e3.states.back()[1] == doctest::Approx(1.0 - std::cos(1.0)).epsilon(1e-10));
}

TEST_CASE("Heisenberg closed form")
{
  const BField h = BField::from_strings(3, {{"1"}, {"0", "1"}, {"-0.5*sin(x2)", "0.5*sin(x1)", "0"}});
  const auto tr = integrate_dynamics(make_vec({0.3, 0.0, 0.0}), ControlPath::constant(make_vec({0, 1, 0}), 0.0, 1.0), h);
  // x2 = s, x3' = -1/2 sin(s) * 0 + 1/2 sin(0.3)
  CHECK(tr.states.back()[2] == doctest::Approx(0.5 * std::sin(0.3)).epsilon(1e-13));
}

TEST_CASE("guard box raises an excursion")
{
  const Box guard{make_vec({-1, -1}), make_vec({1, 1})};
  CHECK_THROWS_AS(integrate_dynamics(make_vec({0.0, 0.0}), ControlPath::constant(make_vec({3.0, 0.0}), 0.0, 1.0),
                                     BField::identity(2), 32, guard),
                  ExcursionError);
}

TEST_CASE("cost of a constant control")
{
  const auto a = ControlPath::constant(make_vec({0.6, -0.2}), 0.0, 1.0, 2);
  const auto tr = integrate_dynamics(make_vec({0.1, 0.1}), a, BField::identity(2));
  const double c = cost(tr, a, *expr_field("x2", 2), *expr_field("x1", 2));
  // 1/2|a|^2 + int_0^1 (0.1 - 0.2 s) ds + (0.1 + 0.6)
  CHECK(c == doctest::Approx(0.2 + 0.0 + 0.7).epsilon(1e-14));
}

TEST_CASE("Simpson weights integrate cubics")
{
  for (int n : {2, 3, 4, 5, 8, 9}) {
    const double h = 1.0 / n;
    const auto w = simpson_weights(n, h);
    REQUIRE(w.size() == static_cast<std::size_t>(n + 1));
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) acc += w[i] * std::pow(i * h, 3);
    CHECK(acc == doctest::Approx(0.25).epsilon(1e-14));
  }
  const auto w1 = simpson_weights(1, 0.5);
  CHECK(w1[0] == 0.25);
  CHECK(w1[1] == 0.25);
}

TEST_CASE("Pontryagin right-hand side")
{
  const auto r = pontryagin_rhs(0.0, make_vec({0.3, 0.2}), make_vec({1.0, 2.0}), *expr_field("x1 + 3*x2", 2),
                                BField::identity(2));
  CHECK(r.x_dot[0] == 1.0);
  CHECK(r.x_dot[1] == 2.0);
  CHECK(r.p_dot[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.p_dot[1] == doctest::Approx(3.0).epsilon(1e-15));
  const auto q = pontryagin_rhs(0.0, make_vec({0.4, 0.0}), make_vec({0.0, 1.0}), *constant_field(0.0),
                                BField::grushin("sin(x1)"));
  CHECK(q.p_dot[0] == doctest::Approx(-std::sin(0.4) * std::cos(0.4)).epsilon(1e-14));
}

TEST_CASE("shooting on the quadratic problem")
{
  const QuadraticProblem q;
  for (double t : {0.0, 0.3}) {
    const Vec x0 = make_vec({-0.5, 0.6});
    const auto set = solve_bvp_shooting(x0, t, 1.0, *q.f, *q.g, q.b);
    CHECK(set.value == doctest::Approx(q.value(x0, t, 1.0)).epsilon(1e-10));
    const Vec p0 = (q.c - x0) / (2.0 - t);
    CHECK((set.representative.p0 - p0).norm() < 1e-8);
    CHECK(set.representative.terminal_defect < 1e-9);
    CHECK_FALSE(set.spurious);
    CHECK(adjoint_integral_defect(set.representative, *q.f, q.b) < 1e-12);
    CHECK(pontryagin_residual(set.representative, *q.f, q.b) < 1e-8);
    CHECK(control_identity_defect(set.representative, q.b) < 1e-15);
  }
}

TEST_CASE("shooting step count")
{
  ShootingConfig cfg;
  CHECK(shooting_steps(0.0, 1.0, cfg) == 256);
  CHECK(shooting_steps(0.5, 1.0, cfg) % 2 == 0);
  cfg.steps = 40;
  CHECK(shooting_steps(0.5, 1.0, cfg) == 40);
}

TEST_CASE("shooting nonconvergence carries a defect trace")
{
  const QuadraticProblem q;
  ShootingConfig cfg;
  cfg.max_newton = 0;
  try {
    solve_bvp_shooting(make_vec({-0.5, 0.6}), 0.0, 1.0, *q.f, *q.g, q.b, cfg);
    FAIL("expected nonconvergence");
  } catch (const NonconvergenceError& e) {
    CHECK_FALSE(e.defect_trace().empty());
  }
}

TEST_CASE("direct minimization oracle")
{
  const QuadraticProblem q;
  const Vec x0 = make_vec({0.2, 0.1});
  const auto r = direct_minimize_oracle(x0, 0.0, 1.0, *q.f, *q.g, q.b);
  CHECK(r.cost == doctest::Approx(q.value(x0, 0.0, 1.0)).epsilon(1e-8));
  CHECK(r.controls.size() == 8u);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1]);
}

TEST_CASE("uniqueness probe and concatenation on the quadratic problem")
{
  const QuadraticProblem q;
  const auto set = solve_bvp_shooting(make_vec({0.7, 0.7}), 0.0, 1.0, *q.f, *q.g, q.b);
  const auto u = uniqueness_probe(set.representative, 0.5, *q.f, *q.g, q.b);
  CHECK(u.applicable);
  CHECK(u.s == 0.5);
  CHECK(u.sup_distance_optimal < 1e-8);
  const auto c = concatenation_check(set.representative, 0.5, *q.f, *q.g, q.b);
  CHECK(c.residual < 1e-9);
  CHECK(c.tail_value == doctest::Approx(q.value(set.representative.states[128], 0.5, 1.0)).epsilon(1e-9));
}

TEST_CASE("feedback flow of a linear value function")
{
  const Box box{make_vec({-2, -2}), make_vec({2, 2})};
  const BoxGrid grid(box, 0.25);
  const int steps = 8;
  std::vector<double> values;
  for (int k = 0; k <= steps; ++k)
    for (std::size_t n = 0; n < grid.size(); ++n) values.push_back(0.3 * grid.node(n)[0] - 0.2 * grid.node(n)[1]);
  const ValueFunction u(grid, Box{make_vec({-1, -1}), make_vec({1, 1})}, 1.0, steps, values);
  const auto tr = feedback_flow(make_vec({0.1, 0.0}), 0.0, 1.0, u, BField::identity(2));
  CHECK(tr.states.back()[0] == doctest::Approx(0.1 - 0.3).epsilon(1e-12));
  CHECK(tr.states.back()[1] == doctest::Approx(0.2).epsilon(1e-12));
  std::vector<double> steep;
  for (int k = 0; k <= steps; ++k)
    for (std::size_t n = 0; n < grid.size(); ++n) steep.push_back(-3.0 * grid.node(n)[0]);
  const ValueFunction w(grid, box, 1.0, steps, steep);
  CHECK_THROWS_AS(feedback_flow(make_vec({1.5, 0.0}), 0.0, 1.0, w, BField::identity(2)), ExcursionError);
}

TEST_CASE("forbidden direction at the degenerate line")
{
  const auto tr = integrate_dynamics(make_vec({0.0, 0.37}), ControlPath::constant(make_vec({0.0, 1.0}), 0.0, 1.0, 4),
                                     BField::grushin("sin(x1)"));
  for (const Vec& x : tr.states) CHECK((x - make_vec({0.0, 0.37})).norm() <= 1e-12);
}
