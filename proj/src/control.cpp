#include "ncmfg/control.hpp"

#include "ncmfg/errors.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace ncmfg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(const Vec& v)
{
  return v.allFinite();
}

}  // namespace

ControlPath::ControlPath(std::vector<double> knots, std::vector<Vec> values, Interp interp)
    : knots_(std::move(knots)), values_(std::move(values)), interp_(interp)
{
  if (knots_.size() < 2) throw ContractError("control path needs at least two knots");
  if (values_.size() != knots_.size()) throw ContractError("control path needs one value per knot");
  for (std::size_t k = 1; k < knots_.size(); ++k)
    if (!(knots_[k] > knots_[k - 1])) throw ContractError("control knots must be strictly increasing");
  for (const auto& v : values_) {
    if (v.size() != values_.front().size()) throw ContractError("control values differ in dimension");
    if (!finite(v)) throw ContractError("control values must be finite");
  }
}

ControlPath ControlPath::constant(const Vec& a, double t_start, double t_end, int segments)
{
  std::vector<double> knots(segments + 1);
  for (int k = 0; k <= segments; ++k) knots[k] = t_start + (t_end - t_start) * k / segments;
  knots.back() = t_end;
  return ControlPath(std::move(knots), std::vector<Vec>(segments + 1, a));
}

ControlPath ControlPath::piecewise(const std::vector<Vec>& per_segment, double t_start, double t_end)
{
  const int n = static_cast<int>(per_segment.size());
  std::vector<double> knots(n + 1);
  for (int k = 0; k <= n; ++k) knots[k] = t_start + (t_end - t_start) * k / n;
  knots.back() = t_end;
  std::vector<Vec> values(per_segment);
  values.push_back(per_segment.back());
  return ControlPath(std::move(knots), std::move(values));
}

Vec ControlPath::on_segment(int k, double s) const
{
  if (interp_ == Interp::Constant) return values_[k];
  const double w = (s - knots_[k]) / (knots_[k + 1] - knots_[k]);
  return (1.0 - w) * values_[k] + w * values_[k + 1];
}

Vec ControlPath::at(double s) const
{
  auto it = std::upper_bound(knots_.begin(), knots_.end(), s);
  int k = static_cast<int>(it - knots_.begin()) - 1;
  k = std::clamp(k, 0, segments() - 1);
  return on_segment(k, s);
}

double ControlPath::l2_squared() const
{
  double acc = 0.0;
  for (int k = 0; k < segments(); ++k) {
    const double h = knots_[k + 1] - knots_[k];
    if (interp_ == Interp::Constant) {
      acc += h * values_[k].squaredNorm();
    } else {
      const Vec& a = values_[k];
      const Vec& b = values_[k + 1];
      acc += h * (a.squaredNorm() + a.dot(b) + b.squaredNorm()) / 3.0;
    }
  }
  return acc;
}

std::vector<double> simpson_weights(int intervals, double h)
{
  std::vector<double> w(intervals + 1, 0.0);
  if (intervals == 1) {
    w[0] = w[1] = h / 2.0;
    return w;
  }
  int simpson = intervals % 2 == 0 ? intervals : intervals - 3;
  for (int i = 0; i + 2 <= simpson; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (simpson != intervals) {
    const int i = simpson;
    w[i] += 3.0 * h / 8.0;
    w[i + 1] += 9.0 * h / 8.0;
    w[i + 2] += 9.0 * h / 8.0;
    w[i + 3] += 3.0 * h / 8.0;
  }
  return w;
}

Trajectory integrate_dynamics(const Vec& x0, const ControlPath& a, const BField& b, int substeps,
                              const std::optional<Box>& guard)
{
  if (x0.size() != b.dim() || a.dim() != b.dim()) throw ContractError("dimension mismatch in dynamics");
  if (substeps < 1) throw ContractError("substeps must be positive");
  Trajectory tr;
  tr.times.push_back(a.t_start());
  tr.states.push_back(x0);
  auto rhs = [&](int k, double s, const Vec& x) -> Vec { return b.matrix(x) * a.on_segment(k, s); };
  Vec x = x0;
  for (int k = 0; k < a.segments(); ++k) {
    tr.segment_start.push_back(static_cast<int>(tr.times.size()) - 1);
    const double t0 = a.knots()[k];
    const double h = (a.knots()[k + 1] - t0) / substeps;
    for (int j = 0; j < substeps; ++j) {
      const double s = t0 + j * h;
      const Vec k1 = rhs(k, s, x);
      const Vec k2 = rhs(k, s + h / 2, x + h / 2 * k1);
      const Vec k3 = rhs(k, s + h / 2, x + h / 2 * k2);
      const Vec k4 = rhs(k, s + h, x + h * k3);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      const double tn = j + 1 == substeps ? a.knots()[k + 1] : s + h;
      if (guard && (!finite(x) || !guard->contains(x, 1e-12)))
        throw ExcursionError("trajectory left the computational box", tn);
      tr.times.push_back(tn);
      tr.states.push_back(x);
    }
  }
  tr.segment_start.push_back(static_cast<int>(tr.times.size()) - 1);
  return tr;
}

double cost(const Trajectory& traj, const ControlPath& a, const Field& f, const Field& g)
{
  if (traj.times.empty() || std::abs(traj.times.front() - a.t_start()) > 1e-12 ||
      std::abs(traj.times.back() - a.t_end()) > 1e-12 ||
      traj.segment_start.size() != static_cast<std::size_t>(a.segments() + 1))
    throw ContractError("trajectory and control windows differ");
  double acc = 0.0;
  for (int k = 0; k < a.segments(); ++k) {
    const int i0 = traj.segment_start[k];
    const int i1 = traj.segment_start[k + 1];
    const double h = (traj.times[i1] - traj.times[i0]) / (i1 - i0);
    const auto w = simpson_weights(i1 - i0, h);
    for (int i = i0; i <= i1; ++i) {
      const double s = traj.times[i];
      acc += w[i - i0] * (0.5 * a.on_segment(k, s).squaredNorm() + f.value(traj.states[i], s));
    }
  }
  return acc + g.value(traj.states.back(), a.t_end());
}

PontryaginRhs pontryagin_rhs(double s, const Vec& x, const Vec& p, const Field& f, const BField& b,
                             double adjoint_sign)
{
  const Mat m = b.matrix(x);
  PontryaginRhs r;
  r.x_dot = m * (m.transpose() * p);
  r.p_dot = -adjoint_sign * b.grad_x_half_norm_sq(x, p) + f.gradient(x, s);
  return r;
}

int shooting_steps(double t, double T, const ShootingConfig& cfg)
{
  if (cfg.steps > 0) return cfg.steps;
  int n = static_cast<int>(std::ceil((T - t) * cfg.steps_per_unit - 1e-9));
  n = std::max(n, 2);
  return n + (n % 2);
}

ExtremalPath integrate_extremal(const Vec& x0, const Vec& p0, double t, double T, int steps, const Field& f,
                                const Field& g, const BField& b, double adjoint_sign)
{
  const double h = (T - t) / steps;
  ExtremalPath e;
  e.p0 = p0;
  e.times.resize(steps + 1);
  e.states.resize(steps + 1);
  e.adjoints.resize(steps + 1);
  e.controls.resize(steps + 1);
  Vec x = x0, p = p0;
  e.times[0] = t;
  e.states[0] = x;
  e.adjoints[0] = p;
  for (int k = 0; k < steps; ++k) {
    const double s = t + k * h;
    const auto r1 = pontryagin_rhs(s, x, p, f, b, adjoint_sign);
    const auto r2 = pontryagin_rhs(s + h / 2, x + h / 2 * r1.x_dot, p + h / 2 * r1.p_dot, f, b, adjoint_sign);
    const auto r3 = pontryagin_rhs(s + h / 2, x + h / 2 * r2.x_dot, p + h / 2 * r2.p_dot, f, b, adjoint_sign);
    const auto r4 = pontryagin_rhs(s + h, x + h * r3.x_dot, p + h * r3.p_dot, f, b, adjoint_sign);
    x += h / 6.0 * (r1.x_dot + 2.0 * r2.x_dot + 2.0 * r3.x_dot + r4.x_dot);
    p += h / 6.0 * (r1.p_dot + 2.0 * r2.p_dot + 2.0 * r3.p_dot + r4.p_dot);
    e.times[k + 1] = k + 1 == steps ? T : t + (k + 1) * h;
    e.states[k + 1] = x;
    e.adjoints[k + 1] = p;
    if (!finite(x) || !finite(p)) break;
  }
  if (!finite(x) || !finite(p)) {
    e.terminal_defect = kInf;
    e.cost = kInf;
    return e;
  }
  for (int k = 0; k <= steps; ++k)
    e.controls[k] = b.matrix(e.states[k]).transpose() * e.adjoints[k];
  e.terminal_defect = (e.adjoints.back() + g.gradient(e.states.back(), T)).norm();
  const auto w = simpson_weights(steps, h);
  double acc = 0.0;
  for (int k = 0; k <= steps; ++k)
    acc += w[k] * (0.5 * e.controls[k].squaredNorm() + f.value(e.states[k], e.times[k]));
  e.cost = acc + g.value(e.states.back(), T);
  return e;
}

namespace {

double start_scale(const Vec& x0, double T, const Field& g)
{
  const int d = static_cast<int>(x0.size());
  double s = 0.0;
  std::array<int, kMaxDim> idx{};
  for (;;) {
    Vec y = x0;
    for (int i = 0; i < d; ++i) y[i] += 0.5 * (idx[i] - 1);
    s = std::max(s, g.gradient(y, T).cwiseAbs().maxCoeff());
    int k = d - 1;
    while (k >= 0 && ++idx[k] == 3) idx[k--] = 0;
    if (k < 0) break;
  }
  return std::max(s, 0.1);
}

std::vector<Vec> shooting_starts(int d, double s, int n)
{
  std::vector<Vec> out;
  out.push_back(Vec::Zero(d));
  for (int i = 0; i < d; ++i)
    for (double sign : {-1.0, 1.0}) {
      Vec v = Vec::Zero(d);
      v[i] = sign * s;
      out.push_back(v);
    }
  std::array<int, kMaxDim> idx{};
  for (;;) {
    int nonzero = 0;
    Vec v(d);
    for (int i = 0; i < d; ++i) {
      v[i] = (idx[i] - 1) * s;
      nonzero += idx[i] != 1;
    }
    if (nonzero >= 2) out.push_back(v);
    int k = d - 1;
    while (k >= 0 && ++idx[k] == 3) idx[k--] = 0;
    if (k < 0) break;
  }
  if (static_cast<int>(out.size()) > n) out.resize(std::max(n, 1));
  return out;
}

bool lex_less(const Vec& a, const Vec& b)
{
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

bool inside_guard(const ExtremalPath& e, const std::optional<Box>& guard)
{
  if (!guard) return true;
  for (const auto& x : e.states)
    if (!guard->contains(x, 1e-12)) return false;
  return true;
}

}  // namespace

OptimalSet solve_bvp_shooting(const Vec& x0, double t, double T, const Field& f, const Field& g, const BField& b,
                              const ShootingConfig& cfg)
{
  const int d = b.dim();
  if (x0.size() != d) throw ContractError("initial point dimension does not match bfield");
  if (!(t < T)) throw ContractError("shooting needs t < T");
  const int steps = shooting_steps(t, T, cfg);

  auto defect = [&](const Vec& p0, ExtremalPath* keep) -> Vec {
    ExtremalPath e = integrate_extremal(x0, p0, t, T, steps, f, g, b, cfg.adjoint_sign);
    Vec r = Vec::Constant(d, kInf);
    if (std::isfinite(e.terminal_defect) && inside_guard(e, cfg.guard))
      r = e.adjoints.back() + g.gradient(e.states.back(), T);
    if (keep) *keep = std::move(e);
    return r;
  };

  const double scale = cfg.start_scale > 0.0 ? cfg.start_scale : start_scale(x0, T, g);
  std::vector<double> trace;
  std::vector<ExtremalPath> converged;
  for (const Vec& start : shooting_starts(d, scale, cfg.n_starts)) {
    Vec p = start;
    Vec r = defect(p, nullptr);
    double rn = r.norm();
    for (int it = 0; it < cfg.max_newton && std::isfinite(rn) && rn >= cfg.bvp_tol; ++it) {
      Mat jac(d, d);
      const double eps = cfg.fd_step * std::max(1.0, p.norm());
      bool ok = true;
      for (int j = 0; j < d && ok; ++j) {
        Vec pp = p, pm = p;
        pp[j] += eps;
        pm[j] -= eps;
        const Vec rp = defect(pp, nullptr);
        const Vec rm = defect(pm, nullptr);
        ok = finite(rp) && finite(rm);
        if (ok) jac.col(j) = (rp - rm) / (2.0 * eps);
      }
      if (!ok) break;
      const Vec step = jac.colPivHouseholderQr().solve(-r);
      if (!finite(step)) break;
      double lambda = 1.0;
      bool accepted = false;
      while (lambda > 1e-6) {
        const Vec pn = p + lambda * step;
        const Vec rnew = defect(pn, nullptr);
        const double nn = rnew.norm();
        if (std::isfinite(nn) && nn < (1.0 - 1e-4 * lambda) * rn) {
          p = pn;
          r = rnew;
          rn = nn;
          accepted = true;
          break;
        }
        lambda /= 2.0;
      }
      if (!accepted) break;
    }
    trace.push_back(rn);
    if (std::isfinite(rn) && rn < cfg.bvp_tol) {
      ExtremalPath e;
      defect(p, &e);
      converged.push_back(std::move(e));
    }
  }
  if (converged.empty()) throw NonconvergenceError("no shooting start converged", trace);

  OptimalSet out;
  {
    const double h = (T - t) / steps;
    const auto w = simpson_weights(steps, h);
    double acc = 0.0;
    for (int k = 0; k <= steps; ++k) acc += w[k] * f.value(x0, k == steps ? T : t + k * h);
    out.zero_control_cost = acc + g.value(x0, T);
  }
  out.converged = converged;

  std::vector<ExtremalPath> distinct;
  for (auto& e : converged) {
    bool dup = false;
    for (const auto& o : distinct)
      if ((o.p0 - e.p0).norm() <= cfg.dedup_tol * std::max(1.0, e.p0.norm())) dup = true;
    if (!dup) distinct.push_back(e);
  }
  std::stable_sort(distinct.begin(), distinct.end(), [&](const ExtremalPath& a, const ExtremalPath& c) {
    if (std::abs(a.cost - c.cost) > cfg.tie_tol) return a.cost < c.cost;
    return lex_less(a.p0, c.p0);
  });
  for (auto& e : distinct) e.spurious = e.cost > out.zero_control_cost + cfg.sanity_margin;
  out.representative = distinct.front();
  out.alternates.assign(distinct.begin() + 1, distinct.end());
  out.value = out.representative.cost;
  out.spurious = out.representative.spurious;
  return out;
}

OracleResult direct_minimize_oracle(const Vec& x0, double t, double T, const Field& f, const Field& g,
                                    const BField& b, const OracleConfig& cfg)
{
  const int d = b.dim();
  const int n = cfg.n_steps;
  if (n < 1 || !(t < T)) throw ContractError("oracle needs n_steps >= 1 and t < T");
  double radius = cfg.radius;
  if (radius <= 0.0) radius = std::max(1.0, 2.0 * start_scale(x0, T, g));

  OracleResult res;
  auto evaluate = [&](const std::vector<Vec>& a) {
    ++res.evaluations;
    const ControlPath path = ControlPath::piecewise(a, t, T);
    const Trajectory tr = integrate_dynamics(x0, path, b, cfg.substeps);
    if (!finite(tr.states.back())) return kInf;
    return cost(tr, path, f, g);
  };

  // Constant-control scan.
  const int gp = std::max(cfg.grid_points, 2);
  const double spacing = 2.0 * radius / (gp - 1);
  std::vector<std::pair<double, Vec>> scan;
  std::array<int, kMaxDim> idx{};
  for (;;) {
    Vec a(d);
    for (int i = 0; i < d; ++i) a[i] = -radius + idx[i] * spacing;
    scan.emplace_back(evaluate(std::vector<Vec>(n, a)), a);
    int k = d - 1;
    while (k >= 0 && ++idx[k] == gp) idx[k--] = 0;
    if (k < 0) break;
  }
  std::stable_sort(scan.begin(), scan.end(), [](const auto& a, const auto& c) { return a.first < c.first; });

  double best = kInf;
  std::vector<Vec> best_a;
  const int starts = std::min<int>(cfg.starts, static_cast<int>(scan.size()));
  for (int s = 0; s < starts; ++s) {
    std::vector<Vec> a(n, scan[s].second);
    double val = scan[s].first;
    double step = spacing;
    int sweeps = 0;
    std::vector<Vec> prev = a;
    while (step >= cfg.refine_tol && sweeps < cfg.max_sweeps) {
      ++sweeps;
      bool improved = false;
      for (int seg = 0; seg < n; ++seg) {
        for (int i = 0; i < d; ++i) {
          for (double dir : {1.0, -1.0}) {
            bool moved = false;
            for (;;) {
              a[seg][i] += dir * step;
              const double v = evaluate(a);
              if (v < val) {
                val = v;
                moved = true;
                improved = true;
              } else {
                a[seg][i] -= dir * step;
                break;
              }
            }
            if (moved) break;
          }
        }
      }
      if (improved) {
        // Pattern move along the last sweep's displacement.
        std::vector<Vec> trial = a;
        for (int seg = 0; seg < n; ++seg) trial[seg] += a[seg] - prev[seg];
        const double v = evaluate(trial);
        prev = a;
        if (v < val) {
          val = v;
          a = std::move(trial);
        }
      } else {
        step /= 2.0;
        if (s == 0 || val < best) res.trace.push_back(std::min(val, best));
      }
    }
    if (val < best) {
      best = val;
      best_a = a;
    }
  }
  res.controls = best_a;
  res.cost = best;
  return res;
}

Trajectory feedback_flow(const Vec& x0, double t0, double t1, const ValueFunction& u, const BField& b,
                         const FlowConfig& cfg)
{
  if (x0.size() != u.dim()) throw ContractError("point dimension does not match value function");
  if (t1 < t0 || t0 < -1e-12 || t1 > u.horizon() + 1e-12) throw ContractError("flow window outside horizon");
  const Box& box = u.grid().box();
  if (!box.contains(x0, 1e-12)) throw ExcursionError("initial point outside the value-function grid", t0);

  Trajectory tr;
  auto control = [&](const Vec& x, double s) -> Vec {
    const auto gs = u.gradient(x, s, b);
    return -(b.matrix(x).transpose() * gs.grad);
  };
  auto velocity = [&](const Vec& x, double s) -> Vec { return b.matrix(x) * control(x, s); };

  tr.times.push_back(t0);
  tr.states.push_back(x0);
  tr.controls.push_back(control(x0, t0));
  tr.segment_start.push_back(0);
  const double span = t1 - t0;
  if (span > 0.0) {
    const int n = std::max(1, static_cast<int>(std::ceil(span / u.dt() * cfg.substeps - 1e-9)));
    const double h = span / n;
    Vec x = x0;
    for (int k = 0; k < n; ++k) {
      const double s = t0 + k * h;
      const Vec k1 = velocity(x, s);
      const Vec k2 = velocity(x + h / 2 * k1, s + h / 2);
      const Vec k3 = velocity(x + h / 2 * k2, s + h / 2);
      const Vec k4 = velocity(x + h * k3, s + h);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      const double tn = k + 1 == n ? t1 : s + h;
      if (!finite(x) || !box.contains(x, 1e-12))
        throw ExcursionError("feedback flow left the value-function grid", tn);
      tr.times.push_back(tn);
      tr.states.push_back(x);
      tr.controls.push_back(control(x, tn));
    }
  }
  tr.segment_start.push_back(static_cast<int>(tr.times.size()) - 1);
  return tr;
}

namespace {

int snap_index(const ExtremalPath& ext, double s)
{
  const double h = (ext.t_end() - ext.t_start()) / ext.steps();
  return static_cast<int>(std::lround((s - ext.t_start()) / h));
}

double sup_distance(const ExtremalPath& ext, int k, const ExtremalPath& r)
{
  double m = 0.0;
  for (int j = 0; j <= r.steps() && k + j <= ext.steps(); ++j)
    m = std::max(m, (r.states[j] - ext.states[k + j]).norm());
  return m;
}

}  // namespace

UniquenessReport uniqueness_probe(const ExtremalPath& ext, double s, const Field& f, const Field& g,
                                  const BField& b, const ShootingConfig& cfg, const ValueFunction* u)
{
  UniquenessReport rep;
  rep.s = s;
  if (!(s > ext.t_start()) || !(s < ext.t_end())) return rep;
  const int k = snap_index(ext, s);
  const int n = ext.steps();
  if (k <= 0 || k >= n) return rep;
  rep.applicable = true;
  rep.s = ext.times[k];

  ShootingConfig c = cfg;
  c.steps = n - k;
  const OptimalSet set = solve_bvp_shooting(ext.states[k], ext.times[k], ext.t_end(), f, g, b, c);
  rep.converged = static_cast<int>(set.converged.size());
  for (const auto& r : set.converged) {
    const double dist = sup_distance(ext, k, r);
    rep.restart_costs.push_back(r.cost);
    rep.sup_distance_all = std::max(rep.sup_distance_all, dist);
    if (r.cost <= set.value + 1e-8) rep.sup_distance_optimal = std::max(rep.sup_distance_optimal, dist);
  }

  if (u) {
    double gap = 0.0;
    for (int j = k + 1; j < n; ++j) {
      const Vec& x = ext.states[j];
      if (!u->grid().box().contains(x, 0.0)) continue;
      const auto bg = numeric_b_gradient(*u, b, x, ext.times[j]);
      gap = std::max(gap, (bg.value + ext.controls[j]).norm());
    }
    rep.gradient_gap = gap;
  }
  return rep;
}

ConcatenationReport concatenation_check(const ExtremalPath& ext, double s, const Field& f, const Field& g,
                                        const BField& b, const ShootingConfig& cfg)
{
  const int n = ext.steps();
  const int k = snap_index(ext, s);
  if (k <= 0 || k > n) throw ContractError("concatenation time must lie in (t, T]");
  ConcatenationReport rep;
  rep.s = ext.times[k];
  rep.total = ext.cost;
  const double h = (ext.t_end() - ext.t_start()) / n;
  const auto w = simpson_weights(k, h);
  for (int i = 0; i <= k; ++i)
    rep.running += w[i] * (0.5 * ext.controls[i].squaredNorm() + f.value(ext.states[i], ext.times[i]));
  if (k == n) {
    rep.tail_value = g.value(ext.states.back(), ext.t_end());
  } else {
    ShootingConfig c = cfg;
    c.steps = n - k;
    rep.tail_value = solve_bvp_shooting(ext.states[k], ext.times[k], ext.t_end(), f, g, b, c).value;
  }
  rep.residual = std::abs(rep.total - (rep.running + rep.tail_value));
  return rep;
}

double adjoint_integral_defect(const ExtremalPath& ext, const Field& f, const BField& b)
{
  const int n = ext.steps();
  const double h = (ext.t_end() - ext.t_start()) / n;
  std::vector<Vec> q(n + 1);
  for (int i = 0; i <= n; ++i) q[i] = pontryagin_rhs(ext.times[i], ext.states[i], ext.adjoints[i], f, b).p_dot;
  Vec integral = Vec::Zero(b.dim());
  double worst = 0.0;
  for (int i = n - 2; i >= 0; i -= 2) {
    integral += h / 3.0 * (q[i] + 4.0 * q[i + 1] + q[i + 2]);
    worst = std::max(worst, (ext.adjoints[i] - (ext.adjoints[n] - integral)).norm());
  }
  return worst;
}

double pontryagin_residual(const ExtremalPath& ext, const Field& f, const BField& b)
{
  const int n = ext.steps();
  double worst = 0.0;
  for (int i = 1; i < n; ++i) {
    const double dt = ext.times[i + 1] - ext.times[i - 1];
    const auto r = pontryagin_rhs(ext.times[i], ext.states[i], ext.adjoints[i], f, b);
    const Vec dx = (ext.states[i + 1] - ext.states[i - 1]) / dt - r.x_dot;
    const Vec dp = (ext.adjoints[i + 1] - ext.adjoints[i - 1]) / dt - r.p_dot;
    worst = std::max({worst, dx.norm(), dp.norm()});
  }
  return worst;
}

double control_identity_defect(const ExtremalPath& ext, const BField& b)
{
  double worst = 0.0;
  for (int i = 0; i <= ext.steps(); ++i)
    worst = std::max(worst, (ext.controls[i] - b.matrix(ext.states[i]).transpose() * ext.adjoints[i]).norm());
  return worst;
}

void ExtremalPath::write_csv(const std::filesystem::path& path) const
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot open " + path.string());
  const int d = static_cast<int>(states.front().size());
  std::fputs("s", fp);
  for (const char* tag : {"x", "p", "a"})
    for (int i = 0; i < d; ++i) std::fprintf(fp, ",%s%d", tag, i + 1);
  std::fputc('\n', fp);
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::fprintf(fp, "%.17e", times[k]);
    for (const auto* v : {&states[k], &adjoints[k], &controls[k]})
      for (int i = 0; i < d; ++i) std::fprintf(fp, ",%.17e", (*v)[i]);
    std::fputc('\n', fp);
  }
  std::fclose(fp);
}

}  // namespace ncmfg
