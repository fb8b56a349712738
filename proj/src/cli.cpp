#include "ncmfg/cli.hpp"

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/coupling.hpp"
#include "ncmfg/errors.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/io.hpp"
#include "ncmfg/measure.hpp"
#include "ncmfg/mfg.hpp"

#include <CLI11.hpp>
#include <tbb/global_control.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

namespace ncmfg {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::vector<std::string> scenarios;
  std::vector<std::string> sets;
  std::string out;
  int threads = 0;

  std::string x0;
  double t = 0.0;
  std::optional<double> s;
  bool oracle = false;
  bool with_hjb = false;

  bool all = false;
  std::string fault;
  int shooting_points = 2;

  std::string show;
};

std::string fmt(const char* f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string snapshot_name(const char* stem, std::size_t i, const char* ext)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%04zu%s", stem, i, ext);
  return buf;
}

Json error_json(const std::string& kind, const std::string& message, int code)
{
  return Json{{"kind", kind}, {"message", message}, {"exit", code}};
}

// Every failure path lands on exactly one documented code.
int classify(const std::exception& e, std::string& kind)
{
  if (auto* c = dynamic_cast<const ConfigError*>(&e)) {
    kind = c->kind();
    return kExitConfig;
  }
  if (auto* x = dynamic_cast<const ExpressionError*>(&e)) {
    kind = x->kind();
    return kExitConfig;
  }
  if (auto* n = dynamic_cast<const NonconvergenceError*>(&e)) {
    kind = n->kind();
    return kExitShooting;
  }
  if (auto* g = dynamic_cast<const Error*>(&e)) {
    kind = g->kind();
    return g->kind() == "io" ? kExitConfig : kExitValidation;
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) {
    kind = "io";
    return kExitConfig;
  }
  kind = "internal";
  return kExitValidation;
}

// Output directory, manifest and error reporting for one command.
class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), opts_(o)
  {
    start_ = std::chrono::steady_clock::now();
    std::string dir = o.out;
    if (dir.empty()) {
      const char* env = std::getenv("NCMFG_OUT_DIR");
      dir = env && *env ? env : "ncmfg_out";
    }
    dir_ = dir;
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  fs::path output(const std::string& rel)
  {
    const fs::path p = dir_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    outputs_.push_back(p);
    return p;
  }
  void track(const fs::path& p) { outputs_.push_back(p); }

  void set_scenario(const ScenarioConfig& sc) { scenario_ = sc; }

  int finish(int status, const std::optional<Json>& error = {})
  {
    Json m;
    m["command"] = command_;
    m["version"] = kToolVersion;
    m["overrides"] = opts_.sets;
    if (scenario_) {
      m["scenario"] = scenario_->name;
      m["seed"] = scenario_->seed;
      m["config"] = serialize_scenario(*scenario_);
    } else {
      m["scenario"] = nullptr;
      m["seed"] = nullptr;
      m["config"] = nullptr;
    }
    m["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json outs = Json::array();
    for (const auto& p : outputs_) {
      if (!fs::exists(p)) continue;
      char crc[16];
      std::snprintf(crc, sizeof crc, "%08x", static_cast<unsigned>(crc32_file(p)));
      outs.push_back(Json{{"path", fs::relative(p, dir_).generic_string()},
                          {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
                          {"crc32", crc}});
    }
    m["outputs"] = outs;
    m["exit_status"] = status;
    if (error) m["error"] = *error;
    try {
      write_json(dir_ / "manifest.json", m);
    } catch (const std::exception& e) {
      std::cerr << Json{{"error", error_json("io", e.what(), kExitConfig)}}.dump() << "\n";
    }
    return status;
  }

  int fail(const std::exception& e)
  {
    std::string kind;
    const int code = classify(e, kind);
    Json err = error_json(kind, e.what(), code);
    if (auto* n = dynamic_cast<const NonconvergenceError*>(&e)) err["defect_trace"] = n->defect_trace();
    if (auto* x = dynamic_cast<const ExcursionError*>(&e)) {
      err["exit_time"] = x->exit_time();
      err["index"] = x->index();
    }
    std::cerr << Json{{"error", err}}.dump() << "\n";
    return finish(code, err);
  }

 private:
  std::string command_;
  const Options& opts_;
  fs::path dir_;
  std::vector<fs::path> outputs_;
  std::optional<ScenarioConfig> scenario_;
  std::chrono::steady_clock::time_point start_;
};

ScenarioConfig resolve_scenario(const Options& o)
{
  ScenarioConfig sc;
  if (!o.config.empty())
    sc = load_scenario(o.config, o.sets);
  else if (!o.scenarios.empty())
    sc = apply_overrides(builtin_scenario(o.scenarios.front()), o.sets);
  else
    throw ConfigError("no scenario given; use --config or --scenario", "config-missing");
  sc.validate();
  for (const auto& [key, text] : {std::pair{"coupling.V", sc.V}, std::pair{"coupling.G", sc.G}})
    if (text.find("sqrt") != std::string::npos)
      std::cerr << Json{{"warning", {{"kind", "analyticity"},
                                     {"message", std::string(key) + " uses sqrt; the cost may fail to be analytic "
                                                                    "where the argument vanishes"}}}}
                       .dump()
                << "\n";
  return sc;
}

struct StaticCosts {
  ParticleMeasure m;
  FieldPtr f;
  FieldPtr g;
};

// Costs frozen at m0 for the single-agent commands.
StaticCosts static_costs(const ScenarioConfig& sc, std::size_t particles)
{
  StaticCosts c;
  c.m = sample_initial(sc.m0, particles, sc.seed);
  const CouplingSpec cs = sc.make_coupling();
  c.f = running_cost_field(cs, {c.m}, sc.dim);
  c.g = terminal_cost_field(cs, c.m, sc.dim);
  return c;
}

int default_stride(const ValueFunction& u) { return std::max(1, u.steps() / 16); }

Json regularity_json(const RegularityReport& r)
{
  return Json{{"lipschitz_x", r.lipschitz_x}, {"lipschitz_t", r.lipschitz_t},
              {"semiconcavity_sup", r.semiconcavity_sup}};
}

Json diagnostics_json(const ValueFunction& u)
{
  const auto& d = u.diagnostics();
  return Json{{"dt", d.dt},
              {"steps", u.steps()},
              {"evals_per_node", d.evals_per_node},
              {"lipschitz_bound", to_json(d.lipschitz_bound)},
              {"lattice_radius", to_json(d.lattice_radius)},
              {"padding_required", to_json(d.padding_required)},
              {"grid_nodes", u.grid().size()}};
}

Json bound_json(const ValueBound& b)
{
  return Json{{"sup_u", b.sup_u}, {"sup_f", b.sup_f}, {"sup_g", b.sup_g}, {"bound", b.bound}, {"ok", b.ok}};
}

// Exact solution |x|^2 / (2 (1 + T - t)) of the flat quadratic scenario.
std::optional<Json> hopf_lax_block(const ScenarioConfig& sc, const ValueFunction& u)
{
  if (sc.bfield_kind != "identity" || sc.dim != 2 || sc.V != "0" ||
      sc.G != builtin_scenario("identity2d-decoupled").G)
    return std::nullopt;
  const BoxGrid& g = u.grid();
  const double T = u.horizon();
  double err = 0.0;
  for (int k = 0; k <= u.steps(); ++k) {
    const auto v = u.layer(k);
    const double t = u.time(k);
    for (std::size_t n = 0; n < g.size(); ++n) {
      const Vec x = g.node(n);
      if (!sc.box.contains(x, 1e-9)) continue;
      err = std::max(err, std::abs(v[n] - x.squaredNorm() / (2.0 * (1.0 + T - t))));
    }
  }
  return Json{{"sup_error", err}, {"limit", 2e-2}, {"ok", err < 2e-2}};
}

Json uniqueness_json(const UniquenessReport& r)
{
  Json j{{"applicable", r.applicable},
         {"s", r.s},
         {"converged", r.converged},
         {"sup_distance_all", r.sup_distance_all},
         {"sup_distance_optimal", r.sup_distance_optimal},
         {"restart_costs", r.restart_costs}};
  j["gradient_gap"] = r.gradient_gap ? Json(*r.gradient_gap) : Json(nullptr);
  return j;
}

Json verify_json(const VerifyReport& v)
{
  Json u = Json::array();
  for (const auto& q : v.uniqueness) u.push_back(uniqueness_json(q));
  return Json{{"hj_residual",
               {{"sup", v.hj.sup},
                {"mean", v.hj.mean},
                {"nodes", v.hj.nodes},
                {"kinks_skipped", v.hj.kinks_skipped},
                {"terminal_layer_evaluated", v.hj.terminal_layer_evaluated}}},
              {"scheme_tol", v.scheme_tol},
              {"weak_form", {{"sup", v.weak.sup}, {"mean", v.weak.mean}, {"evaluations", v.weak.evaluations}}},
              {"weak_tol", v.weak_tol},
              {"regularity", regularity_json(v.regularity)},
              {"lipschitz", {{"ratio", v.lipschitz.ratio}, {"bound", v.lipschitz.bound}, {"ok", v.lipschitz.ok}}},
              {"terminal_consistency", v.terminal_consistency},
              {"mass_defect", v.mass_defect},
              {"uniqueness", u},
              {"ok", v.ok}};
}

void write_bfield_csv(const fs::path& path, const Mat& m)
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot write " + path.string());
  std::fputs("i,j,value\n", fp);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) std::fprintf(fp, "%d,%d,%.17e\n", i + 1, j + 1, m(i, j));
  std::fclose(fp);
}

// ---------------------------------------------------------------- commands

int cmd_scenarios(const Options& o)
{
  if (!o.show.empty()) {
    std::cout << serialize_scenario(builtin_scenario(o.show));
    return kExitOk;
  }
  for (const auto& sc : builtin_scenarios()) {
    std::printf("%-28s dim=%d bfield=%-8s coupled=%s\n", sc.name.c_str(), sc.dim, sc.bfield_kind.c_str(),
                sc.make_coupling().depends_on_measure() ? "yes" : "no");
  }
  return kExitOk;
}

int cmd_solve_hjb(Run& run, const Options& o)
{
  const ScenarioConfig sc = resolve_scenario(o);
  run.set_scenario(sc);
  const BField b = sc.make_bfield();
  const StaticCosts c = static_costs(sc, sc.particles);
  const ValueFunction u = solve_hjb(*c.f, *c.g, b, sc.grid_spec());

  u.write_csv(run.output("u.csv"), default_stride(u));
  Json rep;
  rep["scenario"] = sc.name;
  rep["regularity"] = regularity_json(u.regularity());
  rep["diagnostics"] = diagnostics_json(u);
  rep["value_bound"] = bound_json(value_bound(u, *c.f, *c.g));
  if (auto hl = hopf_lax_block(sc, u)) rep["hopf_lax"] = *hl;
  write_json(run.output("regularity.json"), rep);
  return kExitOk;
}

int cmd_solve_mfg(Run& run, const Options& o)
{
  const ScenarioConfig sc = resolve_scenario(o);
  run.set_scenario(sc);
  const MFGSolution sol = picard_solve(sc);

  write_text(run.output("scenario.lock"), serialize_scenario(sc));
  sol.u.write_csv(run.output("u.csv"), default_stride(sol.u));
  const auto snaps = sol.snapshots();
  Json times = Json::array();
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    snaps[i].write_csv(run.output(snapshot_name("m_t", i, ".csv")));
    snaps[i].write_sidecar(run.output(snapshot_name("m_t", i, ".json")));
    times.push_back(snaps[i].time_label());
  }
  Json d;
  d["scenario"] = sc.name;
  d["converged"] = sol.converged;
  d["iterations"] = sol.iterations;
  d["residual_history"] = sol.residual_history;
  d["fp_tol"] = sc.fp_tol;
  d["snapshot_times"] = times;
  d["regularity"] = regularity_json(sol.u.regularity());
  d["diagnostics"] = diagnostics_json(sol.u);
  if (sol.converged) d["verification"] = verify_json(verify_solution(sol, sc));
  write_json(run.output("diagnostics.json"), d);
  if (!sol.converged) {
    const Json err = error_json("fixed-point-nonconvergence",
                                "Picard iteration did not reach fp_tol within max_iter", kExitFixedPoint);
    std::cerr << Json{{"error", err}}.dump() << "\n";
    return run.finish(kExitFixedPoint, err);
  }
  return kExitOk;
}

int cmd_trajectory(Run& run, const Options& o)
{
  const ScenarioConfig sc = resolve_scenario(o);
  run.set_scenario(sc);
  if (o.x0.empty()) throw ConfigError("trajectory needs --x0", "config-missing");
  const Vec x0 = vec_from_string(o.x0);
  if (x0.size() != sc.dim) throw ConfigError("x0 has the wrong dimension", "validation");
  if (!sc.box.contains(x0, 0.0)) throw ConfigError("x0 lies outside the scenario box", "validation");
  const double T = sc.horizon;
  if (!(o.t >= 0.0 && o.t < T)) throw ConfigError("t must lie in [0, horizon)", "validation");
  const double s = o.s.value_or(o.t + 0.5 * (T - o.t));
  if (!(s > o.t && s < T)) throw ConfigError("s must lie in (t, horizon)", "validation");

  const BField b = sc.make_bfield();
  const StaticCosts c = static_costs(sc, sc.frozen_particles);
  const ShootingConfig cfg = sc.shooting_config();
  const OptimalSet set = solve_bvp_shooting(x0, o.t, T, *c.f, *c.g, b, cfg);
  const ExtremalPath& ext = set.representative;
  ext.write_csv(run.output("extremal.csv"));

  std::optional<ValueFunction> u;
  if (o.with_hjb) u = solve_hjb(*c.f, *c.g, b, sc.grid_spec());
  const UniquenessReport uq = uniqueness_probe(ext, s, *c.f, *c.g, b, cfg, u ? &*u : nullptr);
  const ConcatenationReport cc = concatenation_check(ext, s, *c.f, *c.g, b, cfg);

  Json p;
  p["scenario"] = sc.name;
  p["x0"] = to_json(x0);
  p["t"] = o.t;
  p["horizon"] = T;
  p["value"] = set.value;
  p["zero_control_cost"] = set.zero_control_cost;
  p["spurious"] = set.spurious;
  p["p0"] = to_json(ext.p0);
  p["steps"] = ext.steps();
  p["terminal_defect"] = ext.terminal_defect;
  p["adjoint_integral_defect"] = adjoint_integral_defect(ext, *c.f, b);
  p["pontryagin_residual"] = pontryagin_residual(ext, *c.f, b);
  p["control_identity_defect"] = control_identity_defect(ext, b);
  Json alts = Json::array();
  for (const auto& a : set.alternates) alts.push_back(Json{{"cost", a.cost}, {"p0", to_json(a.p0)}});
  p["alternates"] = alts;
  p["uniqueness"] = uniqueness_json(uq);
  p["concatenation"] = {{"s", cc.s},
                        {"total", cc.total},
                        {"running", cc.running},
                        {"tail_value", cc.tail_value},
                        {"residual", cc.residual}};
  if (o.oracle) {
    const OracleResult r = direct_minimize_oracle(x0, o.t, T, *c.f, *c.g, b, sc.oracle_config());
    p["oracle"] = {{"cost", r.cost}, {"gap", std::abs(r.cost - set.value)}, {"evaluations", r.evaluations},
                   {"trace", r.trace}};
  }
  write_json(run.output("probes.json"), p);
  return kExitOk;
}

int cmd_pushforward(Run& run, const Options& o)
{
  const ScenarioConfig sc = resolve_scenario(o);
  run.set_scenario(sc);
  const BField b = sc.make_bfield();
  const StaticCosts c = static_costs(sc, sc.particles);
  const ValueFunction u = solve_hjb(*c.f, *c.g, b, sc.grid_spec());
  const auto layers = snapshot_layers(u.steps(), sc.snapshots);
  std::vector<double> times;
  for (int k : layers) times.push_back(u.time(k));
  const auto curve = push_forward_curve(c.m, u, b, times, sc.flow_config());

  Json snaps = Json::array();
  double mass = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    curve[i].write_csv(run.output(snapshot_name("m_t", i, ".csv")));
    curve[i].write_sidecar(run.output(snapshot_name("m_t", i, ".json")));
    mass = std::max(mass, std::abs(1.0 - static_cast<double>(curve[i].size()) * curve[i].weight()));
    snaps.push_back(Json{{"t", curve[i].time_label()},
                         {"second_moment", curve[i].second_moment()},
                         {"d1_from_m0", d1_distance(curve[i], curve.front(), sc.n_exact).value}});
  }
  const DensityGrid dens = density_estimate(curve.back(), BoxGrid(sc.box, sc.dx), sc.rho_width);
  dens.write_csv(run.output("density_T.csv"));

  const WeakFormReport weak = weak_form_residual(curve, u, b, default_test_battery(sc.box));
  const LipschitzReport lip = time_lipschitz_report(curve, u, b);
  double dx = 0.0;
  for (int a = 0; a < u.dim(); ++a) dx = std::max(dx, u.grid().spacing(a));
  const double weak_tol = 5.0 * (u.dt() + dx + 1.0 / std::sqrt(static_cast<double>(c.m.size())));

  Json r;
  r["scenario"] = sc.name;
  r["particles"] = c.m.size();
  r["snapshots"] = snaps;
  r["mass_defect"] = mass;
  r["weak_form"] = {{"sup", weak.sup}, {"mean", weak.mean}, {"evaluations", weak.evaluations}, {"tol", weak_tol}};
  r["lipschitz"] = {{"ratio", lip.ratio}, {"bound", lip.bound}, {"ok", lip.ok}};
  r["density"] = {{"total", dens.total}, {"raw_total", dens.raw_total}, {"sup", dens.sup()},
                  {"undersmoothed", dens.undersmoothed}};
  write_json(run.output("report.json"), r);
  return kExitOk;
}

int cmd_validate(Run& run, const Options& o)
{
  std::vector<ScenarioConfig> list;
  if (!o.config.empty()) list.push_back(load_scenario(o.config, o.sets));
  for (const auto& name : o.scenarios) list.push_back(apply_overrides(builtin_scenario(name), o.sets));
  if (o.all)
    for (const auto& sc : builtin_scenarios()) list.push_back(apply_overrides(sc, o.sets));
  if (list.empty()) throw ConfigError("validate needs at least one scenario", "empty-scenario-list");
  for (const auto& sc : list) sc.validate();
  run.set_scenario(list.front());

  ValidationOptions vo;
  if (!o.fault.empty()) {
    if (o.fault != "adjoint-sign") throw ConfigError("unknown fault '" + o.fault + "'");
    vo.adjoint_fault = true;
  }
  vo.shooting_points = o.shooting_points;

  std::vector<ValidationCheck> checks;
  for (const auto& sc : list) {
    std::vector<fs::path> outs;
    auto part = validation_battery(sc, vo, run.dir() / sc.name, &outs);
    for (const auto& p : outs) run.track(p);
    checks.insert(checks.end(), part.begin(), part.end());
  }

  int failed = 0;
  std::printf("%-28s %-36s %-24s %-24s %s\n", "scenario", "check", "value", "limit", "status");
  Json arr = Json::array();
  for (const auto& c : checks) {
    std::printf("%-28s %-36s %-24s %-24s %s\n", c.scenario.c_str(), c.name.c_str(), fmt("%.6e", c.value).c_str(),
                fmt("%.6e", c.limit).c_str(), c.pass ? "PASS" : "FAIL");
    failed += c.pass ? 0 : 1;
    arr.push_back(Json{{"scenario", c.scenario}, {"check", c.name}, {"value", c.value}, {"limit", c.limit},
                       {"pass", c.pass}});
  }
  std::printf("%zu checks, %d failed\n", checks.size(), failed);
  std::fflush(stdout);
  Json doc{{"checks", arr}, {"failed", failed}, {"fault", o.fault.empty() ? Json(nullptr) : Json(o.fault)}};
  write_json(run.output("validate.json"), doc);
  if (failed > 0) {
    Json names = Json::array();
    for (const auto& c : checks)
      if (!c.pass) names.push_back(c.scenario + ":" + c.name);
    const Json err = error_json("validation-failed", std::to_string(failed) + " invariant checks failed",
                                kExitValidation);
    Json full = err;
    full["failures"] = names;
    std::cerr << Json{{"error", full}}.dump() << "\n";
    return run.finish(kExitValidation, full);
  }
  return kExitOk;
}

}  // namespace

std::vector<ValidationCheck> validation_battery(const ScenarioConfig& sc, const ValidationOptions& opts,
                                                const fs::path& out_dir, std::vector<fs::path>* outputs)
{
  std::vector<ValidationCheck> out;
  auto check = [&](const std::string& name, double value, double limit, bool pass) {
    out.push_back(ValidationCheck{sc.name, name, value, limit, pass});
  };
  auto below = [&](const std::string& name, double value, double limit) {
    check(name, value, limit, value < limit);
  };
  auto emit = [&](const std::string& rel) {
    const fs::path p = out_dir / rel;
    fs::create_directories(p.parent_path());
    if (outputs) outputs->push_back(p);
    return p;
  };

  sc.validate();
  const BField b = sc.make_bfield();
  const int d = sc.dim;

  // B-calculus on a 3^d lattice of the box.
  {
    std::vector<Vec> pts;
    const int total = static_cast<int>(std::pow(3, d));
    for (int k = 0; k < total; ++k) {
      Vec x(d);
      int r = k;
      for (int a = 0; a < d; ++a) {
        x[a] = sc.box.lo[a] + (sc.box.hi[a] - sc.box.lo[a]) * 0.25 * (1 + r % 3);
        r /= 3;
      }
      pts.push_back(x);
    }
    Vec p(d);
    for (int a = 0; a < d; ++a) p[a] = 0.7 - 0.45 * a;
    const double eps = 1e-4;
    double dp_err = 0.0, dx_err = 0.0, probe_err = 0.0;
    for (const Vec& x : pts) {
      const Vec dp = dp_hamiltonian(b, x, p);
      const Vec dx = b.grad_x_half_norm_sq(x, p);
      for (int a = 0; a < d; ++a) {
        Vec e = Vec::Zero(d);
        e[a] = eps;
        const double fd = (hamiltonian(b, x, p + e) - hamiltonian(b, x, p - e)) / (2 * eps);
        dp_err = std::max(dp_err, std::abs(fd - dp[a]) / std::max(1.0, std::abs(dp[a])));
        const double fx = (hamiltonian(b, x + e, p) - hamiltonian(b, x - e, p)) / (2 * eps);
        dx_err = std::max(dx_err, std::abs(fx - dx[a]) / std::max(1.0, std::abs(dx[a])));
      }
      const Vec c = 0.5 * (sc.box.lo + sc.box.hi);
      auto q = [&](const Vec& y) { return 0.5 * (y - c).squaredNorm() + (y - c)[0]; };
      Vec grad = x - c;
      grad[0] += 1.0;
      const Vec exact = (grad.transpose() * b.matrix(x)).transpose();
      const std::vector<double> radii{1e-2, 1e-3, 1e-4};
      const auto rep = b_differentiability_probe(q, b, x, radii);
      probe_err = std::max(probe_err, (rep.rho - exact).lpNorm<Eigen::Infinity>());
    }
    below("bfield.dp_hamiltonian_fd", dp_err, 1e-6);
    below("bfield.dx_hamiltonian_fd", dx_err, 1e-6);
    below("bfield.b_differentiability", probe_err, 1e-3);
    if (!out_dir.empty()) {
      const Vec center = 0.5 * (sc.box.lo + sc.box.hi);
      write_bfield_csv(emit("B_center.csv"), b.matrix(center));
    }
  }

  // Fixed point and its verification.
  const MFGSolution sol = picard_solve(sc);
  check("mfg.converged", sol.residual_history.empty() ? 0.0 : sol.residual_history.back(), sc.fp_tol,
        sol.converged);
  const VerifyReport v = verify_solution(sol, sc);
  below("mfg.hj_residual_mean", v.hj.mean, v.scheme_tol);
  below("mfg.weak_form_sup", v.weak.sup, v.weak_tol);
  check("mfg.time_lipschitz", v.lipschitz.ratio, v.lipschitz.bound + 1e-3, v.lipschitz.ok);
  below("mfg.terminal_consistency", v.terminal_consistency, 1e-12);
  below("mfg.mass_defect", v.mass_defect, 1e-15);
  for (std::size_t i = 0; i < v.uniqueness.size(); ++i) {
    const auto& q = v.uniqueness[i];
    const std::string name = "mfg.uniqueness_" + std::to_string(i);
    check(name, q.applicable ? q.sup_distance_optimal : INFINITY, sc.uniq_tol,
          q.applicable && q.sup_distance_optimal < sc.uniq_tol);
  }

  const auto f = solution_running_cost(sol, sc);
  const auto g = solution_terminal_cost(sol, sc);
  const ValueBound vb = value_bound(sol.u, *f, *g);
  check("hjb.value_bound", vb.sup_u, vb.bound + 1e-6, vb.ok);

  // Shooting at particles of m0.
  ShootingConfig cfg = sc.shooting_config();
  if (opts.adjoint_fault) cfg.adjoint_sign = -1.0;
  const double T = sc.horizon;
  const std::size_t n = sol.m0.size();
  for (int i = 0; i < opts.shooting_points && n > 0; ++i) {
    const std::size_t idx = (static_cast<std::size_t>(2 * i + 1) * n) / static_cast<std::size_t>(2 * opts.shooting_points);
    const Vec& x0 = sol.m0[idx];
    const std::string tag = "shooting_" + std::to_string(i) + ".";
    try {
      const OptimalSet set = solve_bvp_shooting(x0, 0.0, T, *f, *g, b, cfg);
      const ExtremalPath& ext = set.representative;
      check(tag + "converged", 0.0, 0.0, true);
      below(tag + "terminal_defect", ext.terminal_defect, 1e-9);
      below(tag + "adjoint_integral_defect", adjoint_integral_defect(ext, *f, b), 1e-7);
      below(tag + "pontryagin_residual", pontryagin_residual(ext, *f, b), 1e-3);
      check(tag + "not_spurious", set.value - set.zero_control_cost, cfg.sanity_margin, !set.spurious);
      below(tag + "concatenation", concatenation_check(ext, 0.5 * T, *f, *g, b, cfg).residual, 1e-4);
      if (i == 0 && !out_dir.empty()) ext.write_csv(emit("extremal.csv"));
    } catch (const NonconvergenceError& e) {
      const double last = e.defect_trace().empty() ? INFINITY : e.defect_trace().back();
      check(tag + "converged", last, cfg.bvp_tol, false);
    }
  }

  if (!out_dir.empty()) {
    sol.u.write_csv(emit("u.csv"), sol.u.steps());
    sol.curve.back().write_csv(emit("m_T.csv"));
  }
  return out;
}

int run_cli(int argc, char** argv)
{
  CLI::App app{"Solvers for first-order mean field games with degenerate control-affine dynamics", "ncmfg"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool many) {
    sub->add_option("--config", o.config, "Scenario INI file");
    if (many)
      sub->add_option("--scenario", o.scenarios, "Built-in scenario name (repeatable)");
    else
      sub->add_option("--scenario", o.scenarios, "Built-in scenario name")->expected(1);
    sub->add_option("--set", o.sets, "Override section.key=value (repeatable)");
    sub->add_option("--out", o.out, "Output directory (default $NCMFG_OUT_DIR or ./ncmfg_out)");
    sub->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::NonNegativeNumber);
  };

  auto* scen = app.add_subcommand("scenarios", "List built-in scenarios");
  scen->add_option("--show", o.show, "Print the INI of one built-in");
  auto* hjb = app.add_subcommand("solve-hjb", "Solve the HJ equation with costs frozen at m0");
  common(hjb, false);
  auto* mfg = app.add_subcommand("solve-mfg", "Damped Picard iteration for the coupled system");
  common(mfg, false);
  auto* traj = app.add_subcommand("trajectory", "Shooting solve of the Pontryagin system with probes");
  common(traj, false);
  traj->add_option("--x0", o.x0, "Initial point, comma separated")->required();
  traj->add_option("--t", o.t, "Initial time");
  traj->add_option("--s", o.s, "Probe time in (t, T)");
  traj->add_flag("--oracle", o.oracle, "Compare with the direct minimization oracle");
  traj->add_flag("--with-hjb", o.with_hjb, "Solve the HJ equation for the gradient probe");
  auto* push = app.add_subcommand("pushforward", "Transport m0 by the feedback flow");
  common(push, false);
  auto* val = app.add_subcommand("validate", "Run the invariant battery");
  common(val, true);
  val->add_flag("--all", o.all, "Every built-in scenario");
  val->add_option("--inject-fault", o.fault, "Deliberate fault: adjoint-sign");
  val->add_option("--shooting-points", o.shooting_points, "Shooting checks per scenario")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", error_json("cli-parse", e.what(), kExitConfig)}}.dump() << "\n";
    return kExitConfig;
  }

  std::unique_ptr<tbb::global_control> limit;
  if (o.threads > 0)
    limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                  static_cast<std::size_t>(o.threads));

  if (scen->parsed()) {
    try {
      return cmd_scenarios(o);
    } catch (const std::exception& e) {
      std::string kind;
      const int code = classify(e, kind);
      std::cerr << Json{{"error", error_json(kind, e.what(), code)}}.dump() << "\n";
      return code;
    }
  }

  std::string name;
  int (*fn)(Run&, const Options&) = nullptr;
  if (hjb->parsed()) name = "solve-hjb", fn = cmd_solve_hjb;
  if (mfg->parsed()) name = "solve-mfg", fn = cmd_solve_mfg;
  if (traj->parsed()) name = "trajectory", fn = cmd_trajectory;
  if (push->parsed()) name = "pushforward", fn = cmd_pushforward;
  if (val->parsed()) name = "validate", fn = cmd_validate;

  std::unique_ptr<Run> run;
  try {
    run = std::make_unique<Run>(name, o);
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", error_json("io", e.what(), kExitConfig)}}.dump() << "\n";
    return kExitConfig;
  }
  try {
    const int status = fn(*run, o);
    if (status == kExitOk) return run->finish(kExitOk);
    return status;
  } catch (const std::exception& e) {
    return run->fail(e);
  }
}

}  // namespace ncmfg
