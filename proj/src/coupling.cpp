#include "ncmfg/coupling.hpp"

#include "ncmfg/dual.hpp"
#include "ncmfg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ncmfg {

double mollified_density(const ParticleMeasure& m, const BumpKernel& rho, const Vec& x)
{
  double acc = 0.0;
  for (const auto& y : m.positions()) acc += rho.value(x - y);
  return m.empty() ? 0.0 : acc * m.weight();
}

Vec mollified_density_gradient(const ParticleMeasure& m, const BumpKernel& rho, const Vec& x)
{
  Vec g = Vec::Zero(x.size());
  for (const auto& y : m.positions()) g += rho.gradient(x - y);
  return m.empty() ? g : Vec(g * m.weight());
}

namespace {

double eval_expr(const Expression& e, const Vec& x, double t, double z)
{
  std::array<double, kNumSlots> s{};
  for (int i = 0; i < x.size(); ++i) s[i] = x[i];
  s[kSlotT] = t;
  s[kSlotZ] = z;
  return e(s);
}

// (dE/dx, dE/dz) at (x, t, z).
std::pair<Vec, double> eval_expr_gradient(const Expression& e, const Vec& x, double t, double z)
{
  using D = Dual<kMaxDim + 1>;
  std::array<D, kNumSlots> s{};
  for (int i = 0; i < x.size(); ++i) s[i] = D::variable(x[i], i);
  s[kSlotT] = D(t);
  s[kSlotZ] = D::variable(z, kMaxDim);
  const D r = e.eval<D>(s);
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) g[i] = r.d[i];
  return {g, r.d[kMaxDim]};
}

}  // namespace

double eval_F(const CouplingSpec& spec, const Vec& x, double t, const ParticleMeasure& m)
{
  const double z = spec.running_depends_on_measure() ? mollified_density(m, spec.rho, x) : 0.0;
  return eval_expr(spec.V, x, t, z);
}

double eval_G(const CouplingSpec& spec, const Vec& x, const ParticleMeasure& mT)
{
  const double z = spec.terminal_depends_on_measure() ? mollified_density(mT, spec.rho_g, x) : 0.0;
  return eval_expr(spec.G, x, mT.time_label(), z);
}

CouplingField::CouplingField(Expression expr, BumpKernel rho, std::vector<ParticleMeasure> curve)
    : expr_(std::move(expr)), rho_(std::move(rho)), curve_(std::move(curve)), uses_z_(expr_.uses(kSlotZ))
{
  if (uses_z_ && curve_.empty()) throw ContractError("coupling field needs at least one measure snapshot");
  for (std::size_t k = 1; k < curve_.size(); ++k)
    if (!(curve_[k].time_label() > curve_[k - 1].time_label()))
      throw ContractError("coupling snapshots must have increasing times");
}

void CouplingField::bracket(double t, std::size_t& k, double& w) const
{
  const std::size_t n = curve_.size();
  if (n == 1 || t <= curve_.front().time_label()) {
    k = 0;
    w = 0.0;
    return;
  }
  if (t >= curve_.back().time_label()) {
    k = n - 1;
    w = 0.0;
    return;
  }
  auto it = std::upper_bound(curve_.begin(), curve_.end(), t,
                             [](double v, const ParticleMeasure& m) { return v < m.time_label(); });
  k = static_cast<std::size_t>(it - curve_.begin()) - 1;
  const double t0 = curve_[k].time_label();
  w = (t - t0) / (curve_[k + 1].time_label() - t0);
}

double CouplingField::density(const Vec& x, double t) const
{
  if (table_) return table_->value(x, t);
  std::size_t k;
  double w;
  bracket(t, k, w);
  const double a = mollified_density(curve_[k], rho_, x);
  if (w == 0.0) return a;
  return a + w * (mollified_density(curve_[k + 1], rho_, x) - a);
}

Vec CouplingField::density_gradient(const Vec& x, double t) const
{
  if (table_) return table_->gradient(x, t);
  std::size_t k;
  double w;
  bracket(t, k, w);
  const Vec a = mollified_density_gradient(curve_[k], rho_, x);
  if (w == 0.0) return a;
  return a + w * (mollified_density_gradient(curve_[k + 1], rho_, x) - a);
}

double CouplingField::value(const Vec& x, double t) const
{
  return eval_expr(expr_, x, t, uses_z_ ? density(x, t) : 0.0);
}

Vec CouplingField::gradient(const Vec& x, double t) const
{
  if (!uses_z_) return eval_expr_gradient(expr_, x, t, 0.0).first;
  const auto [gx, gz] = eval_expr_gradient(expr_, x, t, density(x, t));
  if (gz == 0.0) return gx;
  return gx + gz * density_gradient(x, t);
}

void CouplingField::tabulate(const BoxGrid& grid, double t, std::span<double> out) const
{
  if (!uses_z_) {
    Field::tabulate(grid, t, out);
    return;
  }
  std::vector<double> z;
  if (table_ && grid == table_->grid()) {
    z.resize(grid.size());
    std::size_t k;
    double w;
    bracket(t, k, w);
    const auto& a = table_->layer(k);
    for (std::size_t n = 0; n < grid.size(); ++n)
      z[n] = w == 0.0 ? a[n] : a[n] + w * (table_->layer(k + 1)[n] - a[n]);
  } else {
    std::size_t k;
    double w;
    bracket(t, k, w);
    z = kernel_sums(curve_[k], rho_, grid);
    if (w != 0.0) {
      const auto b = kernel_sums(curve_[k + 1], rho_, grid);
      for (std::size_t n = 0; n < grid.size(); ++n) z[n] += w * (b[n] - z[n]);
    }
  }
  for (std::size_t n = 0; n < grid.size(); ++n) out[n] = eval_expr(expr_, grid.node(n), t, z[n]);
}

void CouplingField::attach_grid(const BoxGrid& grid)
{
  if (!uses_z_) return;
  const std::size_t n = curve_.size();
  double dt = 1.0;
  if (n > 1) {
    dt = curve_[1].time_label() - curve_[0].time_label();
    for (std::size_t k = 0; k < n; ++k)
      if (std::abs(curve_[k].time_label() - k * dt) > 1e-9 * std::max(1.0, k * dt))
        throw ContractError("gridded coupling needs uniform snapshot times from 0");
  }
  std::vector<std::vector<double>> layers(n);
  for (std::size_t k = 0; k < n; ++k) layers[k] = kernel_sums(curve_[k], rho_, grid);
  table_ = std::make_shared<TabulatedField>(grid, dt, std::move(layers));
}

FieldPtr running_cost_field(const CouplingSpec& spec, std::vector<ParticleMeasure> curve, int dim)
{
  if (!spec.running_depends_on_measure()) return std::make_shared<ExprField>(spec.V, dim);
  return std::make_shared<CouplingField>(spec.V, spec.rho, std::move(curve));
}

FieldPtr terminal_cost_field(const CouplingSpec& spec, const ParticleMeasure& mT, int dim)
{
  if (!spec.terminal_depends_on_measure()) return std::make_shared<ExprField>(spec.G, dim);
  return std::make_shared<CouplingField>(spec.G, spec.rho_g, std::vector<ParticleMeasure>{mT.relabel(0.0)});
}

namespace {

// max of |F|, |first differences|/h and |second differences|/h^2 (pure and
// mixed) over a uniform lattice of the box.
double c2_scan(const std::function<double(const Vec&)>& fn, const Box& box, int n)
{
  const int d = box.dim();
  std::array<int, kMaxDim> counts{};
  for (int i = 0; i < d; ++i) counts[i] = n;
  const BoxGrid grid(box, counts);
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) v[k] = fn(grid.node(k));
  double m = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    m = std::max(m, std::abs(v[k]));
    const auto idx = grid.multi_index(k);
    for (int a = 0; a < d; ++a) {
      const double h = grid.spacing(a);
      const std::size_t sa = grid.stride(a);
      if (idx[a] + 1 < n) m = std::max(m, std::abs(v[k + sa] - v[k]) / h);
      if (idx[a] > 0 && idx[a] + 1 < n)
        m = std::max(m, std::abs(v[k + sa] - 2.0 * v[k] + v[k - sa]) / (h * h));
      for (int b = a + 1; b < d; ++b) {
        const std::size_t sb = grid.stride(b);
        if (idx[a] + 1 < n && idx[b] + 1 < n)
          m = std::max(m, std::abs(v[k + sa + sb] - v[k + sa] - v[k + sb] + v[k]) / (h * grid.spacing(b)));
      }
    }
  }
  return m;
}

}  // namespace

C2Certificate c2_certify(const CouplingSpec& spec, const Box& box, const std::vector<double>& t_samples,
                         const std::vector<ParticleMeasure>& m_samples, int points_per_axis)
{
  if (m_samples.empty()) throw ContractError("certification needs measure samples");
  C2Certificate c;
  const int coarse = std::max(points_per_axis, 3);
  const int fine = 2 * coarse - 1;
  auto certify = [&](const std::function<double(const Vec&)>& fn) {
    const double a = c2_scan(fn, box, coarse);
    const double b = c2_scan(fn, box, fine);
    if (b > 2.0 * a + 1e-9) throw CertificationError("difference norms grow under refinement");
    return std::max(a, b);
  };
  const std::vector<double> ts = t_samples.empty() ? std::vector<double>{0.0} : t_samples;
  for (const auto& m : m_samples) {
    for (double t : ts) c.F = std::max(c.F, certify([&](const Vec& x) { return eval_F(spec, x, t, m); }));
    c.G = std::max(c.G, certify([&](const Vec& x) { return eval_G(spec, x, m); }));
  }
  c.bound = std::max(c.F, c.G);
  return c;
}

}  // namespace ncmfg
