#include "ncmfg/mfg.hpp"

#include "ncmfg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ncmfg {

namespace {

FieldPtr running_field(const CouplingSpec& cs, const std::vector<ParticleMeasure>& curve, int dim,
                       const BoxGrid* grid = nullptr)
{
  if (!cs.running_depends_on_measure()) return std::make_shared<ExprField>(cs.V, dim);
  auto f = std::make_shared<CouplingField>(cs.V, cs.rho, curve);
  if (grid) f->attach_grid(*grid);
  return f;
}

FieldPtr terminal_field(const CouplingSpec& cs, const ParticleMeasure& mT, int dim, const BoxGrid* grid = nullptr)
{
  if (!cs.terminal_depends_on_measure()) return std::make_shared<ExprField>(cs.G, dim);
  auto g = std::make_shared<CouplingField>(cs.G, cs.rho_g, std::vector<ParticleMeasure>{mT.relabel(0.0)});
  if (grid) g->attach_grid(*grid);
  return g;
}

std::vector<double> layer_times(const ValueFunction& u)
{
  std::vector<double> t(u.steps() + 1);
  for (int k = 0; k <= u.steps(); ++k) t[k] = u.time(k);
  return t;
}

std::vector<ParticleMeasure> relax(const std::vector<ParticleMeasure>& cur, const std::vector<ParticleMeasure>& target,
                                   double theta)
{
  std::vector<ParticleMeasure> out;
  out.reserve(cur.size());
  for (std::size_t k = 0; k < cur.size(); ++k) {
    std::vector<Vec> pos(cur[k].size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = cur[k][i] + theta * (target[k][i] - cur[k][i]);
    out.emplace_back(std::move(pos), cur[k].time_label(), cur[k].provenance(), cur[k].seed());
  }
  return out;
}

}  // namespace

std::vector<ParticleMeasure> MFGSolution::snapshots() const
{
  std::vector<ParticleMeasure> out;
  for (int k : snapshot_layers) out.push_back(curve[k]);
  return out;
}

std::vector<int> snapshot_layers(int steps, int count)
{
  count = std::clamp(count, 2, steps + 1);
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const int k = static_cast<int>(std::lround(static_cast<double>(i) * steps / (count - 1)));
    if (out.empty() || k != out.back()) out.push_back(k);
  }
  return out;
}

MFGSolution picard_solve(const ScenarioConfig& sc)
{
  sc.validate();
  const BField b = sc.make_bfield();
  const CouplingSpec cs = sc.make_coupling();
  const int d = sc.dim;
  HjbGridSpec spec = sc.grid_spec();
  const FlowConfig flow = sc.flow_config();

  MFGSolution sol;
  sol.m0 = sample_initial(sc.m0, sc.particles, sc.seed);
  {
    const auto f = running_field(cs, {sol.m0}, d);
    const auto g = terminal_field(cs, sol.m0, d);
    sol.u = solve_hjb(*f, *g, b, spec);
  }
  spec.dt = sol.u.dt();
  const auto times = layer_times(sol.u);
  sol.snapshot_layers = snapshot_layers(sol.u.steps(), sc.snapshots);
  sol.curve = push_forward_curve(sol.m0, sol.u, b, times, flow);

  const bool coupled = cs.depends_on_measure();
  for (int k = 1; k <= sc.max_iter; ++k) {
    if (coupled) {
      const auto f = running_field(cs, sol.curve, d);
      const auto g = terminal_field(cs, sol.curve.back(), d);
      sol.u = solve_hjb(*f, *g, b, spec);
    }
    const auto target = push_forward_curve(sol.m0, sol.u, b, times, flow);
    auto next = relax(sol.curve, target, sc.theta);
    double res = 0.0;
    for (int l : sol.snapshot_layers) res = std::max(res, d1_distance(next[l], sol.curve[l], sc.n_exact).value);
    sol.curve = std::move(next);
    sol.residual_history.push_back(res);
    sol.iterations = k;
    if (res < sc.fp_tol) {
      sol.converged = true;
      break;
    }
  }
  if (coupled) {
    const auto f = running_field(cs, sol.curve, d);
    const auto g = terminal_field(cs, sol.curve.back(), d);
    sol.u = solve_hjb(*f, *g, b, spec);
  }
  return sol;
}

FieldPtr solution_running_cost(const MFGSolution& sol, const ScenarioConfig& sc)
{
  return running_field(sc.make_coupling(), sol.curve, sc.dim, &sol.u.grid());
}

FieldPtr solution_terminal_cost(const MFGSolution& sol, const ScenarioConfig& sc)
{
  return terminal_field(sc.make_coupling(), sol.curve.back(), sc.dim, &sol.u.grid());
}

HjResidual hj_residual(const ValueFunction& u, const Field& f, const BField& b)
{
  HjResidual r;
  const BoxGrid& g = u.grid();
  const int d = g.dim();
  std::vector<char> inner(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto idx = g.multi_index(n);
    bool ok = u.inner_box().contains(g.node(n), 1e-9);
    for (int a = 0; a < d; ++a) ok = ok && idx[a] > 0 && idx[a] + 1 < g.count(a);
    inner[n] = ok;
  }
  std::vector<double> fv(g.size());
  double acc = 0.0;
  for (int k = 1; k < u.steps(); ++k) {
    f.tabulate(g, u.time(k), fv);
    const auto prev = u.layer(k - 1);
    const auto next = u.layer(k + 1);
    for (std::size_t n = 0; n < g.size(); ++n) {
      if (!inner[n]) continue;
      const auto gs = u.nodal_gradient(n, k, b);
      if (gs.kink) {
        ++r.kinks_skipped;
        continue;
      }
      const double ut = (next[n] - prev[n]) / (u.time(k + 1) - u.time(k - 1));
      const double h = 0.5 * (b.matrix(g.node(n)).transpose() * gs.grad).squaredNorm();
      const double res = std::abs(-ut + h - fv[n]);
      r.sup = std::max(r.sup, res);
      acc += res;
      ++r.nodes;
    }
  }
  r.mean = r.nodes ? acc / static_cast<double>(r.nodes) : 0.0;
  return r;
}

VerifyReport verify_solution(const MFGSolution& sol, const ScenarioConfig& sc, int probes)
{
  VerifyReport rep;
  const BField b = sc.make_bfield();
  const ValueFunction& u = sol.u;
  const auto f = solution_running_cost(sol, sc);
  const auto g = solution_terminal_cost(sol, sc);

  rep.hj = hj_residual(u, *f, b);
  const auto snaps = sol.snapshots();
  rep.weak = weak_form_residual(snaps, u, b, default_test_battery(sc.box));
  rep.regularity = u.regularity();
  rep.lipschitz = time_lipschitz_report(snaps, u, b);

  std::vector<double> gv(u.grid().size());
  g->tabulate(u.grid(), u.horizon(), gv);
  const auto last = u.layer(u.steps());
  for (std::size_t n = 0; n < gv.size(); ++n)
    rep.terminal_consistency = std::max(rep.terminal_consistency, std::abs(last[n] - gv[n]));
  for (const auto& m : sol.curve)
    rep.mass_defect = std::max(rep.mass_defect, std::abs(1.0 - static_cast<double>(m.size()) * m.weight()));

  const ShootingConfig shoot = sc.shooting_config();
  const std::size_t n = sol.m0.size();
  for (int i = 0; i < probes && n > 0; ++i) {
    const Vec& x = sol.m0[(static_cast<std::size_t>(i) * n) / static_cast<std::size_t>(probes)];
    try {
      const OptimalSet set = solve_bvp_shooting(x, 0.0, u.horizon(), *f, *g, b, shoot);
      rep.uniqueness.push_back(
          uniqueness_probe(set.representative, 0.5 * u.horizon(), *f, *g, b, shoot, &u));
    } catch (const NonconvergenceError&) {
      rep.uniqueness.push_back(UniquenessReport{});
    }
  }

  double dx = 0.0;
  for (int a = 0; a < u.dim(); ++a) dx = std::max(dx, u.grid().spacing(a));
  rep.scheme_tol = 5.0 * (u.dt() + dx);
  rep.weak_tol = 5.0 * (u.dt() + dx + 1.0 / std::sqrt(static_cast<double>(n)));
  bool uniq_ok = true;
  for (const auto& q : rep.uniqueness)
    uniq_ok = uniq_ok && q.applicable && q.sup_distance_optimal < sc.uniq_tol;
  rep.ok = rep.hj.mean < rep.scheme_tol && rep.weak.sup < rep.weak_tol && rep.lipschitz.ok &&
           rep.terminal_consistency < 1e-12 && rep.mass_defect < 1e-15 && uniq_ok;
  return rep;
}

StabilityReport stability_harness(const ScenarioConfig& sc, const std::vector<double>& gaps)
{
  sc.validate();
  const BField b = sc.make_bfield();
  const CouplingSpec cs = sc.make_coupling();
  const int d = sc.dim;
  HjbGridSpec spec = sc.grid_spec();
  const FlowConfig flow = sc.flow_config();
  const ParticleMeasure m = sample_initial(sc.m0, sc.particles, sc.seed);

  auto solve_for = [&](const ParticleMeasure& mm) {
    const auto f = running_field(cs, {mm}, d);
    const auto g = terminal_field(cs, mm, d);
    return solve_hjb(*f, *g, b, spec);
  };
  const ValueFunction u = solve_for(m);
  spec.dt = u.dt();
  const auto layers = snapshot_layers(u.steps(), sc.snapshots);
  std::vector<double> times;
  for (int k : layers) times.push_back(u.time(k));
  const auto mu = push_forward_curve(m, u, b, times, flow);

  std::vector<char> inner(u.grid().size());
  for (std::size_t n = 0; n < inner.size(); ++n) inner[n] = sc.box.contains(u.grid().node(n), 1e-9);

  StabilityReport rep;
  rep.gaps = gaps;
  for (double gap : gaps) {
    Vec shift = Vec::Zero(d);
    shift[0] = gap;
    const ValueFunction un = solve_for(m.translated(shift));
    double ug = 0.0;
    for (int k = 0; k <= u.steps(); ++k) {
      const auto a = u.layer(k);
      const auto c = un.layer(k);
      for (std::size_t n = 0; n < inner.size(); ++n)
        if (inner[n]) ug = std::max(ug, std::abs(a[n] - c[n]));
    }
    const auto mun = push_forward_curve(m, un, b, times, flow);
    double fg = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) fg = std::max(fg, d1_distance(mun[k], mu[k], sc.n_exact).value);
    rep.u_gaps.push_back(ug);
    rep.flow_gaps.push_back(fg);
  }
  rep.u_decreasing = rep.flow_decreasing = true;
  for (std::size_t i = 1; i < gaps.size(); ++i) {
    rep.u_decreasing = rep.u_decreasing && rep.u_gaps[i] < rep.u_gaps[i - 1];
    rep.flow_decreasing = rep.flow_decreasing && rep.flow_gaps[i] < rep.flow_gaps[i - 1];
  }
  return rep;
}

}  // namespace ncmfg
