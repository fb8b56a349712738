#include "ncmfg/bfield.hpp"

#include "ncmfg/errors.hpp"

#include <cmath>
#include <numbers>

namespace ncmfg {

BField::BField(int dim, std::vector<std::vector<Expression>> lower, std::optional<double> c2_bound)
    : dim_(dim), lower_(std::move(lower)), c2_(c2_bound)
{
  if (dim_ < 1 || dim_ > kMaxDim) throw ConfigError("bfield dimension out of range");
  if (static_cast<int>(lower_.size()) != dim_) throw ConfigError("bfield needs one row per dimension");
  constant_ = true;
  for (int i = 0; i < dim_; ++i) {
    if (static_cast<int>(lower_[i].size()) != i + 1)
      throw ConfigError("bfield row " + std::to_string(i + 1) + " must have " +
                        std::to_string(i + 1) + " entries");
    for (int j = 0; j <= i; ++j) {
      const Expression& e = lower_[i][j];
      if (e.uses(kSlotT) || e.uses(kSlotZ))
        throw ConfigError("bfield entry h" + std::to_string(i + 1) + std::to_string(j + 1) +
                          " may only depend on x");
      if (e.max_x_index() > i)
        throw ConfigError("bfield entry h" + std::to_string(i + 1) + std::to_string(j + 1) +
                          " may only depend on x1..x" + std::to_string(i));
      constant_ = constant_ && e.is_constant();
    }
  }
  const double h11 = lower_[0][0](std::array<double, kNumSlots>{});
  if (h11 == 0.0) throw ConfigError("h11 must be a nonzero constant");
  if (constant_) cached_ = matrix(Vec::Zero(dim_));
  if (c2_ && !(*c2_ > 0.0)) throw ConfigError("c2 bound must be positive");
}

BField BField::from_strings(int dim, const std::vector<std::vector<std::string>>& lower)
{
  std::vector<std::vector<Expression>> rows;
  for (const auto& r : lower) {
    std::vector<Expression> row;
    for (const auto& s : r) row.push_back(Expression::parse(s));
    rows.push_back(std::move(row));
  }
  return BField(dim, std::move(rows));
}

BField BField::identity(int dim)
{
  std::vector<std::vector<Expression>> rows(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j <= i; ++j) rows[i].push_back(Expression(i == j ? 1.0 : 0.0));
  return BField(dim, std::move(rows));
}

BField BField::grushin(const std::string& h)
{
  return from_strings(2, {{"1"}, {"0", h}});
}

Mat BField::matrix(const Vec& x) const
{
  if (constant_ && cached_.size() > 0) return cached_;
  std::array<double, kNumSlots> s{};
  for (int i = 0; i < dim_; ++i) s[i] = x[i];
  Mat b = Mat::Zero(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j <= i; ++j) b(i, j) = lower_[i][j](s);
  return b;
}

Mat BField::eval_matrix(const Vec& x) const
{
  if (x.size() != dim_) throw ContractError("point dimension does not match bfield");
  if (domain_ && !domain_->contains(x)) throw OutOfDomainError("point outside the computational domain");
  return matrix(x);
}

namespace {

template <class Fn>
void for_each_sample(const Box& box, int n, Fn&& fn)
{
  const int d = box.dim();
  std::array<int, kMaxDim> idx{};
  Vec x(d);
  for (;;) {
    for (int i = 0; i < d; ++i)
      x[i] = n == 1 ? box.center()[i] : box.lo[i] + (box.hi[i] - box.lo[i]) * idx[i] / (n - 1);
    fn(x);
    int a = d - 1;
    while (a >= 0 && ++idx[a] == n) idx[a--] = 0;
    if (a < 0) break;
  }
}

}  // namespace

double BField::estimate_c2_bound(const Box& box, int samples_per_axis) const
{
  using D = Dual<kMaxDim>;
  double c = 0.0;
  const double step = 1e-4;
  for_each_sample(box, samples_per_axis, [&](const Vec& x) {
    for (int i = 0; i < dim_; ++i) {
      for (int j = 0; j <= i; ++j) {
        const Expression& e = lower_[i][j];
        auto grad_at = [&](const Vec& y) {
          std::array<D, kNumSlots> s{};
          for (int k = 0; k < dim_; ++k) s[k] = D::variable(y[k], k);
          return e.eval<D>(s);
        };
        const D g = grad_at(x);
        c = std::max(c, std::abs(g.v));
        for (int k = 0; k < dim_; ++k) c = std::max(c, std::abs(g.d[k]));
        if (e.is_constant()) continue;
        for (int k = 0; k < i; ++k) {
          Vec xp = x, xm = x;
          xp[k] += step;
          xm[k] -= step;
          const D gp = grad_at(xp), gm = grad_at(xm);
          for (int l = 0; l < dim_; ++l)
            c = std::max(c, std::abs((gp.d[l] - gm.d[l]) / (2.0 * step)));
        }
      }
    }
  });
  return c;
}

double BField::c2_bound() const
{
  if (c2_) return *c2_;
  if (constant_) return cached_.cwiseAbs().maxCoeff();
  if (!domain_) throw ContractError("c2 bound requested without a domain to sample");
  return estimate_c2_bound(*domain_);
}

double BField::sup_bbt_norm(const Box& box, int samples_per_axis) const
{
  double s = 0.0;
  for_each_sample(box, constant_ ? 1 : samples_per_axis, [&](const Vec& x) {
    const Mat b = matrix(x);
    const Mat bbt = b * b.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(bbt, Eigen::EigenvaluesOnly);
    s = std::max(s, es.eigenvalues().cwiseAbs().maxCoeff());
  });
  return s;
}

Mat BField::sup_abs_entries(const Box& box, int samples_per_axis) const
{
  Mat m = Mat::Zero(dim_, dim_);
  for_each_sample(box, constant_ ? 1 : samples_per_axis, [&](const Vec& x) {
    m = m.cwiseMax(matrix(x).cwiseAbs());
  });
  return m;
}

Vec BField::grad_x_half_norm_sq(const Vec& x, const Vec& p) const
{
  using D = Dual<kMaxDim>;
  if (constant_) return Vec::Zero(dim_);
  std::array<D, kNumSlots> s{};
  for (int k = 0; k < dim_; ++k) s[k] = D::variable(x[k], k);
  D acc(0.0);
  for (int j = 0; j < dim_; ++j) {
    D q(0.0);
    for (int i = j; i < dim_; ++i) {
      if (p[i] == 0.0) continue;
      q = q + D(p[i]) * lower_[i][j].eval<D>(s);
    }
    acc = acc + q * q;
  }
  Vec g(dim_);
  for (int k = 0; k < dim_; ++k) g[k] = 0.5 * acc.d[k];
  return g;
}

double hamiltonian(const BField& b, const Vec& x, const Vec& p)
{
  const Vec q = b.matrix(x).transpose() * p;
  return 0.5 * q.squaredNorm();
}

Vec dp_hamiltonian(const BField& b, const Vec& x, const Vec& p)
{
  const Mat m = b.matrix(x);
  return m * (m.transpose() * p);
}

Vec b_gradient(const Field& phi, const BField& b, const Vec& x, double t)
{
  return b.eval_matrix(x).transpose() * phi.gradient(x, t);
}

Vec b_gradient(const BoxGrid& grid, std::span<const double> values, const BField& b, const Vec& x)
{
  const int d = grid.dim();
  Vec g(d);
  for (int i = 0; i < d; ++i) {
    const double h = grid.spacing(i);
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    if (!grid.box().contains(xp, 1e-12 * h) || !grid.box().contains(xm, 1e-12 * h))
      throw StencilError("gradient stencil leaves the grid");
    g[i] = (grid.interpolate(values, xp) - grid.interpolate(values, xm)) / (2.0 * h);
  }
  return b.eval_matrix(x).transpose() * g;
}

double b_divergence(const VectorFieldFn& phi, const BField& b, const Vec& x, double step)
{
  const int d = b.dim();
  const Mat m = b.eval_matrix(x);
  double div = 0.0;
  for (int i = 0; i < d; ++i) {
    Vec xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const Vec dphi = (phi(xp) - phi(xm)) / (2.0 * step);
    for (int j = 0; j <= i; ++j) div += m(i, j) * dphi[j];
  }
  return div;
}

Vec lifted_point(const BField& b, const Vec& x, const Vec& v)
{
  const int d = b.dim();
  Vec xt = x;
  std::array<double, kNumSlots> s{};
  for (int i = 0; i < d; ++i) s[i] = x[i];
  for (int i = 0; i < d; ++i) {
    double shift = 0.0;
    for (int j = 0; j <= i; ++j) shift += b.entry(i, j)(s) * v[j];
    xt[i] = x[i] + shift;
    s[i] = xt[i];  // later rows see the lifted coordinate
  }
  return xt;
}

namespace {

std::vector<Vec> probe_directions(int d)
{
  std::vector<Vec> dirs;
  if (d == 1) {
    dirs.push_back(make_vec({1.0}));
    dirs.push_back(make_vec({-1.0}));
    return dirs;
  }
  if (d == 2) {
    for (int k = 0; k < 16; ++k) {
      const double a = 2.0 * std::numbers::pi * k / 16.0;
      dirs.push_back(make_vec({std::cos(a), std::sin(a)}));
    }
    return dirs;
  }
  for (int i = 0; i < d; ++i) {
    for (double s : {1.0, -1.0}) {
      Vec v = Vec::Zero(d);
      v[i] = s;
      dirs.push_back(v);
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (double si : {1.0, -1.0})
        for (double sj : {1.0, -1.0}) {
          Vec v = Vec::Zero(d);
          v[i] = si / std::sqrt(2.0);
          v[j] = sj / std::sqrt(2.0);
          dirs.push_back(v);
        }
  return dirs;
}

}  // namespace

BDifferentiabilityReport b_differentiability_probe(const std::function<double(const Vec&)>& u,
                                                   const BField& b, const Vec& x,
                                                   std::span<const double> radii)
{
  if (radii.empty()) throw ContractError("probe needs at least one radius");
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw ContractError("probe radii must be positive");
    if (k > 0 && !(radii[k] < radii[k - 1])) throw ContractError("probe radii must decrease");
  }
  const int d = b.dim();
  const auto dirs = probe_directions(d);
  const double u0 = u(x);

  BDifferentiabilityReport rep;
  rep.radii.assign(radii.begin(), radii.end());
  double max_increment = 0.0;
  Eigen::MatrixXd V(dirs.size(), d);
  Eigen::VectorXd delta(dirs.size());
  for (double r : radii) {
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      const Vec v = r * dirs[k];
      V.row(k) = v.transpose();
      delta[k] = u(lifted_point(b, x, v)) - u0;
      max_increment = std::max(max_increment, std::abs(delta[k]));
    }
    const Eigen::VectorXd rho = V.colPivHouseholderQr().solve(delta);
    double res = 0.0;
    for (std::size_t k = 0; k < dirs.size(); ++k)
      res = std::max(res, std::abs(delta[k] - V.row(k).dot(rho)) / r);
    rep.residuals.push_back(res);
    rep.rho = rho;
  }
  rep.undetermined.assign(d, false);
  if (max_increment == 0.0) {
    rep.degenerate = true;
    const Mat m = b.matrix(x);
    for (int j = 0; j < d; ++j) {
      if (m.col(j).cwiseAbs().maxCoeff() == 0.0) {
        rep.undetermined[j] = true;
        rep.rho[j] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }
  return rep;
}

}  // namespace ncmfg
