// Acceptance battery. One PASS/FAIL line per criterion; exit status 0 iff all
// pass. Usage: acceptance [--cli path/to/ncmfg] [--only 1,5,9]

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/coupling.hpp"
#include "ncmfg/errors.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/measure.hpp"
#include "ncmfg/mfg.hpp"
#include "ncmfg/scenario.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace ncmfg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what)
  {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& s)
  {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Fixture = built-in scenario with its costs frozen at m0 and the value
// function of those costs.
struct Fixture {
  ScenarioConfig sc;
  ParticleMeasure m;
  FieldPtr f;
  FieldPtr g;
  ValueFunction u;
};

Fixture make_fixture(const ScenarioConfig& sc, std::size_t particles, bool solve)
{
  Fixture fx;
  fx.sc = sc;
  fx.m = sample_initial(sc.m0, particles, sc.seed);
  const CouplingSpec cs = sc.make_coupling();
  fx.f = running_cost_field(cs, {fx.m}, sc.dim);
  fx.g = terminal_cost_field(cs, fx.m, sc.dim);
  if (solve) fx.u = solve_hjb(*fx.f, *fx.g, sc.make_bfield(), sc.grid_spec());
  return fx;
}

std::map<std::string, Fixture>& solved_fixtures()
{
  static std::map<std::string, Fixture> cache;
  if (cache.empty())
    for (const auto& sc : builtin_scenarios()) cache.emplace(sc.name, make_fixture(sc, sc.particles, true));
  return cache;
}

// Deterministic scattered (x0, t) inside the box.
std::vector<std::pair<Vec, double>> scattered_points(const Box& box)
{
  static const double frac[5][4] = {{0.5, 0.5, 0.5, 0.5},
                                    {0.2, 0.7, 0.35, 0.6},
                                    {0.8, 0.3, 0.65, 0.4},
                                    {0.35, 0.15, 0.8, 0.25},
                                    {0.65, 0.85, 0.2, 0.75}};
  static const double times[5] = {0.0, 0.1, 0.25, 0.4, 0.6};
  std::vector<std::pair<Vec, double>> out;
  for (int k = 0; k < 5; ++k) {
    Vec x(box.dim());
    for (int a = 0; a < box.dim(); ++a) x[a] = box.lo[a] + frac[k][a] * (box.hi[a] - box.lo[a]);
    out.emplace_back(x, times[k]);
  }
  return out;
}

// ------------------------------------------------------------------ 1

Outcome hopf_lax()
{
  Outcome o;
  const ScenarioConfig base = builtin_scenario("identity2d-decoupled");
  auto error_at = [&](double h, double& secs) {
    ScenarioConfig sc = base;
    sc.dx = sc.dt = h;
    const auto t0 = Clock::now();
    const ValueFunction u =
        solve_hjb(*constant_field(0.0), *expr_field(sc.G, 2), sc.make_bfield(), sc.grid_spec());
    secs = seconds_since(t0);
    double err = 0.0;
    for (int k = 0; k <= u.steps(); ++k) {
      const auto v = u.layer(k);
      const double tau = 1.0 + u.horizon() - u.time(k);
      for (std::size_t n = 0; n < u.grid().size(); ++n) {
        const Vec x = u.grid().node(n);
        if (sc.box.contains(x, 1e-9)) err = std::max(err, std::abs(v[n] - x.squaredNorm() / (2.0 * tau)));
      }
    }
    return err;
  };
  double s32 = 0.0, s64 = 0.0;
  const double e32 = error_at(1.0 / 32, s32);
  const double e64 = error_at(1.0 / 64, s64);
  o.note("err(1/32)=" + num(e32) + " err(1/64)=" + num(e64) + " ratio=" + num(e32 / e64) + " time(1/64)=" +
         num(s64) + "s");
  o.require(base.box.padded(base.padding).lo[0] == -2.0 && base.box.padded(base.padding).hi[1] == 2.0,
            "grid box is not [-2,2]^2");
  o.require(e64 < 2e-2, "sup error >= 2e-2");
  o.require(e32 / e64 >= 1.8, "refinement ratio < 1.8");
  o.require(s64 < 60.0, "runtime >= 60 s");
  return o;
}

// ------------------------------------------------------------------ 2

Outcome shooting_vs_oracle()
{
  Outcome o;
  const auto t0 = Clock::now();
  double worst_gap = 0.0, worst_defect = 0.0, worst_integral = 0.0;
  int cases = 0;
  for (const auto& sc : builtin_scenarios()) {
    const Fixture fx = make_fixture(sc, sc.frozen_particles, false);
    const BField b = sc.make_bfield();
    for (const auto& [x0, t] : scattered_points(sc.box)) {
      ++cases;
      try {
        const OptimalSet set = solve_bvp_shooting(x0, t, sc.horizon, *fx.f, *fx.g, b, sc.shooting_config());
        const OracleResult r = direct_minimize_oracle(x0, t, sc.horizon, *fx.f, *fx.g, b, sc.oracle_config());
        const double gap = std::abs(set.value - r.cost);
        const double defect = set.representative.terminal_defect;
        const double integral = adjoint_integral_defect(set.representative, *fx.f, b);
        worst_gap = std::max(worst_gap, gap);
        worst_defect = std::max(worst_defect, defect);
        worst_integral = std::max(worst_integral, integral);
        if (gap >= 1e-3 || defect >= 1e-9 || integral >= 1e-7)
          o.require(false, sc.name + " at t=" + num(t) + " gap=" + num(gap) + " defect=" + num(defect) +
                               " integral=" + num(integral));
      } catch (const NonconvergenceError& e) {
        o.require(false, sc.name + " at t=" + num(t) + ": " + e.what());
      }
    }
  }
  const double secs = seconds_since(t0);
  o.note(std::to_string(cases) + " cases, max gap=" + num(worst_gap) + " max defect=" + num(worst_defect) +
         " max integral=" + num(worst_integral) + " time=" + num(secs) + "s");
  o.require(cases == 40, "expected 40 cases");
  o.require(secs < 120.0, "runtime >= 120 s");
  return o;
}

// ------------------------------------------------------------------ 3

Outcome uniqueness_after_start()
{
  Outcome o;
  double worst_dist = 0.0, worst_grad = 0.0;
  for (const std::string name : {"grushin-sin-decoupled", "grushin-sin-coupled"}) {
    const ScenarioConfig sc = builtin_scenario(name);
    const Fixture fx = make_fixture(sc, sc.frozen_particles, true);
    const BField b = sc.make_bfield();
    const double dx = sc.dx;
    for (const auto& [x0, t] : scattered_points(sc.box)) {
      const double s = t + 0.5 * (sc.horizon - t);
      const OptimalSet set = solve_bvp_shooting(x0, t, sc.horizon, *fx.f, *fx.g, b, sc.shooting_config());
      const UniquenessReport r = uniqueness_probe(set.representative, s, *fx.f, *fx.g, b, sc.shooting_config(), &fx.u);
      o.require(r.applicable && r.converged > 0, name + ": probe not applicable");
      o.require(r.gradient_gap.has_value(), name + ": no gradient gap");
      const double gap = r.gradient_gap.value_or(INFINITY);
      worst_dist = std::max(worst_dist, r.sup_distance_all);
      worst_grad = std::max(worst_grad, gap);
      if (r.sup_distance_all >= 1e-4) o.require(false, name + " distance=" + num(r.sup_distance_all));
      if (gap >= 5.0 * dx) o.require(false, name + " gradient gap=" + num(gap));
    }
  }
  o.note("max restart distance=" + num(worst_dist) + " max |D_B u + a|=" + num(worst_grad) + " (limit " +
         num(5.0 / 32) + ")");
  return o;
}

// ------------------------------------------------------------------ 4

Outcome degenerate_direction()
{
  Outcome o;
  const BField b = builtin_scenario("grushin-sin-decoupled").make_bfield();
  double worst = 0.0;
  for (double x2 : {-0.9, -0.3, 0.0, 0.25, 0.8})
    for (double t : {0.0, 0.5}) {
      const Vec x0 = make_vec({0.0, x2});
      const auto a = ControlPath::constant(make_vec({0.0, 1.0}), t, 1.0, 8);
      const Trajectory tr = integrate_dynamics(x0, a, b, 64);
      for (const Vec& x : tr.states) worst = std::max(worst, (x - x0).lpNorm<Eigen::Infinity>());
    }
  o.note("max displacement=" + num(worst));
  o.require(worst <= 1e-12, "trajectory moved");
  return o;
}

// ------------------------------------------------------------------ 5

Outcome push_forward_representation()
{
  Outcome o;
  for (auto& [name, fx] : solved_fixtures()) {
    const ScenarioConfig& sc = fx.sc;
    const BField b = sc.make_bfield();
    const auto layers = snapshot_layers(fx.u.steps(), sc.snapshots);
    std::vector<double> times;
    for (int k : layers) times.push_back(fx.u.time(k));
    const auto curve = push_forward_curve(fx.m, fx.u, b, times, sc.flow_config());
    bool mass = true;
    for (const auto& m : curve)
      mass = mass && m.size() == 4096 && static_cast<double>(m.size()) * m.weight() == 1.0;
    double dx = 0.0;
    for (int a = 0; a < fx.u.dim(); ++a) dx = std::max(dx, fx.u.grid().spacing(a));
    const double tol = 5.0 * (fx.u.dt() + dx + 1.0 / std::sqrt(4096.0));
    const auto weak = weak_form_residual(curve, fx.u, b, default_test_battery(sc.box));
    const auto lip = time_lipschitz_report(curve, fx.u, b);
    o.require(mass, name + ": mass not conserved");
    o.require(weak.sup < tol, name + ": weak residual " + num(weak.sup) + " >= " + num(tol));
    o.require(lip.ratio <= lip.bound + 1e-3, name + ": d1 ratio " + num(lip.ratio) + " > " + num(lip.bound));
    o.note(name + " weak=" + num(weak.sup) + "/" + num(tol) + " ratio=" + num(lip.ratio) + "/" + num(lip.bound));
  }
  return o;
}

// ------------------------------------------------------------------ 6

double brute_force_d1(const std::vector<Vec>& a, const std::vector<Vec>& b)
{
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[perm[i]]).norm();
    best = std::min(best, s / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome d1_engine()
{
  Outcome o;
  boost::random::mt19937 rng(20240601u);
  boost::random::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto cloud = [&](int dim) {
    std::vector<Vec> pts(6, Vec(dim));
    for (auto& p : pts)
      for (int a = 0; a < dim; ++a) p[a] = unit(rng);
    return pts;
  };
  double worst = 0.0;
  int axiom_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 2 + trial % 2;
    const auto a = cloud(dim), b = cloud(dim), c = cloud(dim);
    const ParticleMeasure A(a, 0.0), B(b, 0.0), C(c, 0.0);
    const double ab = d1_distance(A, B).value;
    worst = std::max(worst, std::abs(ab - brute_force_d1(a, b)));
    const double ba = d1_distance(B, A).value;
    const double ac = d1_distance(A, C).value;
    const double bc = d1_distance(B, C).value;
    if (d1_distance(A, A).value != 0.0) ++axiom_failures;
    if (std::abs(ab - ba) > 1e-12) ++axiom_failures;
    if (ac > ab + bc + 1e-12) ++axiom_failures;
    if (!(ab > 0.0)) ++axiom_failures;
    std::vector<Vec> shuffled(a.rbegin(), a.rend());
    if (d1_distance(A, ParticleMeasure(shuffled, 0.0)).value > 1e-12) ++axiom_failures;
  }
  o.note("max |assignment - permutation minimum|=" + num(worst) + " axiom failures=" +
         std::to_string(axiom_failures));
  o.require(worst <= 1e-12, "assignment differs from brute force");
  o.require(axiom_failures == 0, "metric axiom violated");
  return o;
}

// ------------------------------------------------------------------ 7

Outcome mfg_fixed_point()
{
  Outcome o;
  for (const std::string name :
       {"identity2d-decoupled", "grushin-sin-decoupled", "grushin-sigmoid-decoupled", "heisenberg3d-decoupled"}) {
    const MFGSolution sol = picard_solve(builtin_scenario(name));
    const bool ok = sol.converged && sol.iterations == 1 && sol.residual_history.size() == 1 &&
                    sol.residual_history[0] == 0.0;
    o.require(ok, name + ": not a single zero-residual iteration");
  }
  ScenarioConfig sc = builtin_scenario("grushin-sin-coupled");
  o.require(sc.V == "0.1*z" && sc.dx == 1.0 / 32 && sc.dt == 1.0 / 32 && sc.particles == 4096,
            "fixture is not eps=0.1, dx=dt=1/32, N=4096");
  sc.max_iter = 20;
  const auto t0 = Clock::now();
  const MFGSolution sol = picard_solve(sc);
  const double secs = seconds_since(t0);
  const auto& h = sol.residual_history;
  std::string hist;
  for (double r : h) hist += (hist.empty() ? "" : ",") + num(r);
  o.note("coupled residuals=[" + hist + "] time=" + num(secs) + "s");
  o.require(sol.converged && h.back() < 1e-3, "coupled run did not reach 1e-3 within 20 iterations");
  for (std::size_t k = 2; k < h.size(); ++k)
    if (h[k] > h[k - 1]) o.require(false, "residual increased at iteration " + std::to_string(k + 1));
  o.require(secs < 600.0, "runtime >= 10 min");
  return o;
}

// ------------------------------------------------------------------ 8

Outcome stability()
{
  Outcome o;
  const ScenarioConfig sc = builtin_scenario("grushin-sin-coupled");
  const std::vector<double> gaps{0.2, 0.1, 0.05};
  const auto m = sample_initial(sc.m0, sc.particles, sc.seed);
  for (double gap : gaps) {
    Vec shift = Vec::Zero(sc.dim);
    shift[0] = gap;
    const double d = d1_distance(m, m.translated(shift), sc.n_exact).value;
    o.require(std::abs(d - gap) < 1e-12, "perturbation d1 " + num(d) + " != " + num(gap));
  }
  const StabilityReport r = stability_harness(sc, gaps);
  o.note("u gaps=" + num(r.u_gaps[0]) + "," + num(r.u_gaps[1]) + "," + num(r.u_gaps[2]) +
         " flow gaps=" + num(r.flow_gaps[0]) + "," + num(r.flow_gaps[1]) + "," + num(r.flow_gaps[2]));
  o.require(r.u_decreasing, "u gaps not strictly decreasing");
  o.require(r.flow_decreasing, "flow gaps not strictly decreasing");
  return o;
}

// ------------------------------------------------------------------ 9

Outcome regularity()
{
  Outcome o;
  for (auto& [name, fx] : solved_fixtures()) {
    const ValueBound vb = value_bound(fx.u, *fx.f, *fx.g);
    o.require(vb.ok, name + ": |u| " + num(vb.sup_u) + " > " + num(vb.bound));
    ScenarioConfig fine = fx.sc;
    fine.dx = 0.5 * fx.sc.dx;
    fine.dt = 0.5 * fx.u.dt();
    const ValueFunction uf = solve_hjb(*fx.f, *fx.g, fine.make_bfield(), fine.grid_spec());
    const auto& a = fx.u.regularity();
    const auto& b = uf.regularity();
    auto within = [](double p, double q) { return p < 2.0 * q && q < 2.0 * p; };
    o.require(within(a.lipschitz_x, b.lipschitz_x),
              name + ": Lipschitz " + num(a.lipschitz_x) + " -> " + num(b.lipschitz_x));
    o.require(within(a.semiconcavity_sup, b.semiconcavity_sup),
              name + ": semiconcavity " + num(a.semiconcavity_sup) + " -> " + num(b.semiconcavity_sup));
    o.note(name + " L " + num(a.lipschitz_x) + "->" + num(b.lipschitz_x) + " SC " + num(a.semiconcavity_sup) +
           "->" + num(b.semiconcavity_sup));
  }
  return o;
}

// ------------------------------------------------------------------ 10

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome determinism(const std::string& cli)
{
  Outcome o;
  if (cli.empty()) {
    o.require(false, "no CLI path given");
    return o;
  }
  const fs::path root = fs::temp_directory_path() / "ncmfg_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& d : dirs) {
    const std::string cmd = "\"" + cli + "\" validate --scenario grushin-sin-decoupled --scenario identity2d-coupled"
                            " --out \"" + d.string() + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "validate exited with status " + std::to_string(rc));
  }
  std::set<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0]))
    if (e.path().extension() == ".csv") files.insert(fs::relative(e.path(), dirs[0]).string());
  int differ = 0;
  for (const auto& f : files) {
    if (!fs::exists(dirs[1] / f) || slurp(dirs[0] / f) != slurp(dirs[1] / f)) {
      ++differ;
      o.require(false, f + " differs");
    }
  }
  o.note(std::to_string(files.size()) + " CSV files compared, " + std::to_string(differ) + " differ");
  o.require(files.size() >= 6, "too few CSV outputs");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv)
{
  std::string cli;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: acceptance [--cli path] [--only 1,2,...]\n");
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"hopf-lax oracle", hopf_lax},
      {"shooting vs direct oracle", shooting_vs_oracle},
      {"uniqueness after the start", uniqueness_after_start},
      {"degenerate direction", degenerate_direction},
      {"push-forward representation", push_forward_representation},
      {"d1 engine", d1_engine},
      {"fixed point", mfg_fixed_point},
      {"stability", stability},
      {"regularity certificates", regularity},
      {"determinism", [&] { return determinism(cli); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d %-30s %s  (%.1fs)  %s\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
