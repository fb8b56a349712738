#include "ncmfg/field.hpp"

#include "ncmfg/errors.hpp"

#include <cmath>

namespace ncmfg {

Vec Field::gradient(const Vec& x, double t) const
{
  constexpr double h = 1e-6;
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    xm[i] = x[i] - h;
    g[i] = (value(xp, t) - value(xm, t)) / (2.0 * h);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

void Field::tabulate(const BoxGrid& grid, double t, std::span<double> out) const
{
  for (std::size_t n = 0; n < grid.size(); ++n) out[n] = value(grid.node(n), t);
}

ExprField::ExprField(Expression expr, int dim, double z) : expr_(std::move(expr)), dim_(dim), z_(z)
{
  if (expr_.max_x_index() > dim_)
    throw ExpressionError("expression '" + expr_.text() + "' references x beyond dimension " +
                          std::to_string(dim_));
}

double ExprField::value(const Vec& x, double t) const
{
  std::array<double, kNumSlots> s{};
  for (int i = 0; i < x.size(); ++i) s[i] = x[i];
  s[kSlotT] = t;
  s[kSlotZ] = z_;
  return expr_.eval<double>(s);
}

Vec ExprField::gradient(const Vec& x, double t) const
{
  using D = Dual<kMaxDim>;
  const int n = static_cast<int>(x.size());
  std::array<D, kNumSlots> s{};
  for (int i = 0; i < n; ++i) s[i] = D::variable(x[i], i);
  s[kSlotT] = D(t);
  s[kSlotZ] = D(z_);
  const D r = expr_.eval<D>(s);
  Vec g(n);
  for (int i = 0; i < n; ++i) g[i] = r.d[i];
  return g;
}

Vec LambdaField::gradient(const Vec& x, double t) const
{
  return grad_ ? grad_(x, t) : Field::gradient(x, t);
}

TabulatedField::TabulatedField(BoxGrid grid, double dt, std::vector<std::vector<double>> layers)
    : grid_(std::move(grid)), dt_(dt), layers_(std::move(layers))
{
  if (layers_.empty()) throw ContractError("tabulated field needs at least one layer");
  for (const auto& l : layers_)
    if (l.size() != grid_.size()) throw ContractError("tabulated layer size mismatch");
}

void TabulatedField::bracket(double t, std::size_t& k, double& w) const
{
  if (layers_.size() == 1 || !(t > 0.0)) {
    k = 0;
    w = 0.0;
    return;
  }
  const double s = t / dt_;
  const double smax = static_cast<double>(layers_.size() - 1);
  if (s >= smax) {
    k = layers_.size() - 2;
    w = 1.0;
    return;
  }
  k = static_cast<std::size_t>(s);
  w = s - static_cast<double>(k);
}

double TabulatedField::value(const Vec& x, double t) const
{
  std::size_t k;
  double w;
  bracket(t, k, w);
  const double a = grid_.interpolate(layers_[k], x);
  if (w == 0.0) return a;
  return a + w * (grid_.interpolate(layers_[k + 1], x) - a);
}

Vec TabulatedField::layer_gradient(std::size_t k, const Vec& x) const
{
  std::array<int, kMaxDim> cell;
  std::array<double, kMaxDim> w;
  grid_.locate(x, cell, w);
  const int d = grid_.dim();
  Vec g = Vec::Zero(d);
  for (int corner = 0; corner < (1 << d); ++corner) {
    double wt = 1.0;
    std::array<int, kMaxDim> idx = cell;
    for (int i = 0; i < d; ++i) {
      if (corner & (1 << i)) {
        wt *= w[i];
        ++idx[i];
      } else {
        wt *= 1.0 - w[i];
      }
    }
    if (wt == 0.0) continue;
    for (int a = 0; a < d; ++a) g[a] += wt * nodal_derivative(grid_, layers_[k], idx, a);
  }
  return g;
}

Vec TabulatedField::gradient(const Vec& x, double t) const
{
  std::size_t k;
  double w;
  bracket(t, k, w);
  Vec a = layer_gradient(k, x);
  if (w == 0.0) return a;
  return a + w * (layer_gradient(k + 1, x) - a);
}

FieldPtr constant_field(double c)
{
  return std::make_shared<ExprField>(Expression(c), 1);
}

FieldPtr expr_field(const std::string& text, int dim, double z)
{
  return std::make_shared<ExprField>(Expression::parse(text), dim, z);
}

}  // namespace ncmfg
