#include "ncmfg/measure.hpp"

#include "ncmfg/assignment.hpp"
#include "ncmfg/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/random/discrete_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <json.hpp>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ncmfg {

BumpKernel::BumpKernel(double width, int dim, int power) : width_(width), dim_(dim), power_(power)
{
  if (!(width > 0.0)) throw ContractError("kernel width must be positive");
  if (dim < 1 || dim > kMaxDim) throw ContractError("kernel dimension out of range");
  const double half_d = dim / 2.0;
  c_ = std::tgamma(power + 1.0 + half_d) /
       (std::pow(width, dim) * std::pow(M_PI, half_d) * std::tgamma(power + 1.0));
}

double BumpKernel::value(const Vec& y) const
{
  const double q = 1.0 - y.squaredNorm() / (width_ * width_);
  if (q <= 0.0) return 0.0;
  return c_ * std::pow(q, power_);
}

Vec BumpKernel::gradient(const Vec& y) const
{
  const double w2 = width_ * width_;
  const double q = 1.0 - y.squaredNorm() / w2;
  if (q <= 0.0) return Vec::Zero(y.size());
  return (-2.0 * c_ * power_ * std::pow(q, power_ - 1) / w2) * y;
}

double BumpKernel::lipschitz() const
{
  const double s = 1.0 / std::sqrt(2.0 * power_ - 1.0);
  return 2.0 * c_ * power_ / width_ * s * std::pow(1.0 - s * s, power_ - 1);
}

double BumpKernel::c2_norm() const
{
  const double k = power_;
  const double w2 = width_ * width_;
  double hess = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double s = i / 2000.0;
    const double q = 1.0 - s * s;
    const double tangential = -2.0 * c_ * k * std::pow(q, k - 1) / w2;
    const double radial = c_ * 4.0 * k * (k - 1) * std::pow(q, k - 2) * s * s / w2 + tangential;
    hess = std::max(hess, std::sqrt(radial * radial + (dim_ - 1) * tangential * tangential));
  }
  return std::max({c_, lipschitz(), hess});
}

ParticleMeasure::ParticleMeasure(std::vector<Vec> positions, double time_label, std::string provenance,
                                 std::uint64_t seed)
    : positions_(std::move(positions)), time_label_(time_label), provenance_(std::move(provenance)), seed_(seed)
{
  double acc = 0.0;
  for (const auto& x : positions_) acc += x.squaredNorm();
  second_moment_ = positions_.empty() ? 0.0 : acc / positions_.size();
}

ParticleMeasure ParticleMeasure::relabel(double time_label) const
{
  ParticleMeasure m = *this;
  m.time_label_ = time_label;
  return m;
}

ParticleMeasure ParticleMeasure::translated(const Vec& shift) const
{
  std::vector<Vec> pos = positions_;
  for (auto& x : pos) x += shift;
  return ParticleMeasure(std::move(pos), time_label_, provenance_, seed_);
}

void ParticleMeasure::write_csv(const std::filesystem::path& path) const
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot open " + path.string());
  std::fputs("id", fp);
  for (int i = 0; i < dim(); ++i) std::fprintf(fp, ",x%d", i + 1);
  std::fputc('\n', fp);
  for (std::size_t n = 0; n < size(); ++n) {
    std::fprintf(fp, "%zu", n);
    for (int i = 0; i < dim(); ++i) std::fprintf(fp, ",%.17e", positions_[n][i]);
    std::fputc('\n', fp);
  }
  std::fclose(fp);
}

void ParticleMeasure::write_sidecar(const std::filesystem::path& path) const
{
  nlohmann::json j;
  j["time_label"] = time_label_;
  j["seed"] = seed_;
  j["provenance"] = provenance_;
  j["count"] = size();
  j["second_moment"] = second_moment_;
  std::ofstream(path) << j.dump(2) << '\n';
}

ParticleMeasure sample_initial(const M0Spec& spec, std::size_t n, std::uint64_t seed)
{
  if (spec.components.empty()) throw ConfigError("initial measure has no components");
  if (n == 0) throw ConfigError("particle count must be positive");
  const int d = spec.components.front().box.dim();
  std::vector<double> weights;
  for (const auto& c : spec.components) {
    if (c.box.dim() != d) throw ConfigError("initial measure components differ in dimension");
    for (int i = 0; i < d; ++i)
      if (!(c.box.hi[i] > c.box.lo[i])) throw ConfigError("initial measure box is empty");
    if (c.kind == M0Component::Kind::TruncatedGaussian) {
      if (c.mean.size() != d || c.sigma.size() != d) throw ConfigError("gaussian mean/sigma dimension mismatch");
      for (int i = 0; i < d; ++i)
        if (!(c.sigma[i] > 0.0)) throw ConfigError("gaussian sigma must be positive");
    }
    if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
    weights.push_back(c.weight);
  }

  boost::random::mt19937_64 rng(seed);
  boost::random::discrete_distribution<int> pick(weights.begin(), weights.end());
  boost::random::uniform_real_distribution<double> unit(0.0, 1.0);
  const boost::math::normal_distribution<double> std_normal;

  std::vector<Vec> pos(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& c = spec.components[spec.components.size() == 1 ? 0 : pick(rng)];
    Vec x(d);
    for (int i = 0; i < d; ++i) {
      const double v = unit(rng);
      if (c.kind == M0Component::Kind::Uniform) {
        x[i] = c.box.lo[i] + v * (c.box.hi[i] - c.box.lo[i]);
      } else {
        const double a = boost::math::cdf(std_normal, (c.box.lo[i] - c.mean[i]) / c.sigma[i]);
        const double b = boost::math::cdf(std_normal, (c.box.hi[i] - c.mean[i]) / c.sigma[i]);
        const double q = std::clamp(a + v * (b - a), 1e-300, 1.0 - 1e-16);
        x[i] = std::clamp(c.mean[i] + c.sigma[i] * boost::math::quantile(std_normal, q), c.box.lo[i], c.box.hi[i]);
      }
    }
    pos[k] = x;
  }
  return ParticleMeasure(std::move(pos), 0.0, "m0:seed=" + std::to_string(seed), seed);
}

std::vector<ParticleMeasure> push_forward_curve(const ParticleMeasure& m, const ValueFunction& u, const BField& b,
                                                const std::vector<double>& times, const FlowConfig& cfg)
{
  if (m.empty()) throw ContractError("cannot transport an empty measure");
  const std::size_t n = m.size();
  const std::size_t nt = times.size();
  double prev = m.time_label();
  for (double t : times) {
    if (t < prev - 1e-12) throw ContractError("snapshot times must be nondecreasing from the label");
    prev = t;
  }
  std::vector<std::vector<Vec>> pos(nt, std::vector<Vec>(n));
  std::vector<double> exit_time(n, -1.0);
  tbb::parallel_for(std::size_t(0), n, [&](std::size_t i) {
    Vec x = m[i];
    double t0 = m.time_label();
    try {
      for (std::size_t k = 0; k < nt; ++k) {
        if (times[k] > t0) {
          x = feedback_flow(x, t0, times[k], u, b, cfg).states.back();
          t0 = times[k];
        }
        pos[k][i] = x;
      }
    } catch (const ExcursionError& e) {
      exit_time[i] = e.exit_time();
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    if (exit_time[i] >= 0.0)
      throw ExcursionError("particle " + std::to_string(i) + " left the value-function grid", exit_time[i],
                           static_cast<long>(i));
  std::vector<ParticleMeasure> out;
  out.reserve(nt);
  for (std::size_t k = 0; k < nt; ++k)
    out.emplace_back(std::move(pos[k]), times[k], m.provenance(), m.seed());
  return out;
}

ParticleMeasure push_forward(const ParticleMeasure& m, const ValueFunction& u, const BField& b, double t_target,
                             const FlowConfig& cfg)
{
  return std::move(push_forward_curve(m, u, b, {t_target}, cfg).front());
}

double DensityGrid::sup() const
{
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

void DensityGrid::write_csv(const std::filesystem::path& path) const
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot open " + path.string());
  const int d = grid.dim();
  for (int i = 0; i < d; ++i) std::fprintf(fp, "%sx%d", i ? "," : "", i + 1);
  std::fputs(",value\n", fp);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec x = grid.node(n);
    for (int i = 0; i < d; ++i) std::fprintf(fp, "%s%.17e", i ? "," : "", x[i]);
    std::fprintf(fp, ",%.17e\n", values[n]);
  }
  std::fclose(fp);
}

double grid_quadrature(const BoxGrid& grid, const std::vector<double>& values)
{
  double acc = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const auto idx = grid.multi_index(n);
    double w = 1.0;
    for (int a = 0; a < grid.dim(); ++a) {
      w *= grid.spacing(a);
      if (idx[a] == 0 || idx[a] == grid.count(a) - 1) w *= 0.5;
    }
    acc += w * values[n];
  }
  return acc;
}

std::vector<double> kernel_sums(const ParticleMeasure& m, const BumpKernel& k, const BoxGrid& grid)
{
  const int d = grid.dim();
  const double bw = k.width();
  std::vector<double> out(grid.size(), 0.0);
  if (m.empty()) return out;
  const double w = m.weight();
  for (const auto& x : m.positions()) {
    std::array<int, kMaxDim> lo{}, hi{};
    bool any = true;
    for (int a = 0; a < d; ++a) {
      const double h = grid.spacing(a);
      const double o = grid.box().lo[a];
      lo[a] = std::max(0, static_cast<int>(std::ceil((x[a] - bw - o) / h)));
      hi[a] = std::min(grid.count(a) - 1, static_cast<int>(std::floor((x[a] + bw - o) / h)));
      if (lo[a] > hi[a]) any = false;
    }
    if (!any) continue;
    std::array<int, kMaxDim> idx = lo;
    for (;;) {
      const std::size_t node = grid.flat_index(idx);
      out[node] += w * k.value(grid.node(node) - x);
      int a = d - 1;
      while (a >= 0 && ++idx[a] > hi[a]) {
        idx[a] = lo[a];
        --a;
      }
      if (a < 0) break;
    }
  }
  return out;
}

DensityGrid density_estimate(const ParticleMeasure& m, const BoxGrid& grid, double bandwidth)
{
  if (!(bandwidth > 0.0)) throw ContractError("bandwidth must be positive");
  if (m.empty()) throw ContractError("cannot estimate the density of an empty measure");
  DensityGrid out;
  out.grid = grid;
  for (int a = 0; a < grid.dim(); ++a) out.undersmoothed = out.undersmoothed || bandwidth < grid.spacing(a);
  out.values = kernel_sums(m, BumpKernel(bandwidth, grid.dim()), grid);
  out.raw_total = grid_quadrature(grid, out.values);
  if (!(out.raw_total > 0.0)) throw ContractError("density estimate has no mass on the grid");
  for (auto& v : out.values) v /= out.raw_total;
  out.total = grid_quadrature(grid, out.values);
  return out;
}

namespace {

std::vector<std::size_t> stride_subsample(std::size_t n, std::size_t keep)
{
  std::vector<std::size_t> idx(keep);
  for (std::size_t i = 0; i < keep; ++i) idx[i] = i * n / keep;
  return idx;
}

}  // namespace

D1Result d1_distance(const ParticleMeasure& mu, const ParticleMeasure& nu, std::size_t n_exact)
{
  if (mu.empty() || nu.empty()) throw ContractError("d1 of an empty measure");
  if (mu.dim() != nu.dim()) throw ContractError("d1 of measures in different dimensions");
  D1Result r;
  std::size_t n = std::min(mu.size(), nu.size());
  r.approximate = mu.size() != nu.size();
  if (n > n_exact) {
    n = n_exact;
    r.approximate = true;
  }
  const auto ia = stride_subsample(mu.size(), n);
  const auto ib = stride_subsample(nu.size(), n);
  r.used = n;
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = (mu[ia[i]] - nu[ib[j]]).norm();
  double total = 0.0;
  solve_assignment(c, static_cast<int>(n), &total);
  r.value = total / static_cast<double>(n);
  return r;
}

double d1_bruteforce(const ParticleMeasure& mu, const ParticleMeasure& nu)
{
  if (mu.size() != nu.size() || mu.empty()) throw ContractError("brute force needs equal nonempty clouds");
  if (mu.size() > 9) throw ContractError("brute force limited to 9 particles");
  std::vector<std::size_t> perm(mu.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) acc += (mu[i] - nu[perm[i]]).norm();
    best = std::min(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(mu.size());
}

double integrate_against(const std::function<double(const Vec&)>& phi, const ParticleMeasure& m)
{
  if (m.empty()) throw ContractError("integral against an empty measure");
  double acc = 0.0;
  for (const auto& x : m.positions()) acc += phi(x);
  return acc / static_cast<double>(m.size());
}

LipschitzReport time_lipschitz_report(const std::vector<ParticleMeasure>& snapshots, const ValueFunction& u,
                                      const BField& b, double tol)
{
  if (snapshots.size() < 2) throw ContractError("time Lipschitz report needs two snapshots");
  for (const auto& s : snapshots)
    if (s.provenance() != snapshots.front().provenance())
      throw ContractError("snapshots come from different evolutions");
  LipschitzReport r;
  auto ratio = [&](const ParticleMeasure& a, const ParticleMeasure& c) {
    const double dt = std::abs(c.time_label() - a.time_label());
    if (dt <= 0.0) return 0.0;
    return d1_distance(a, c).value / dt;
  };
  for (std::size_t k = 0; k + 1 < snapshots.size(); ++k)
    r.ratio = std::max(r.ratio, ratio(snapshots[k], snapshots[k + 1]));
  if (snapshots.size() > 2) r.ratio = std::max(r.ratio, ratio(snapshots.front(), snapshots.back()));
  r.bound = std::sqrt(static_cast<double>(u.dim())) * u.regularity().lipschitz_x *
            std::max(1.0, b.sup_bbt_norm(u.grid().box()));
  r.ok = r.ratio <= r.bound + tol;
  return r;
}

double TestBump::value(const Vec& x) const
{
  const double q = 1.0 - (x - center).squaredNorm() / (radius * radius);
  return q > 0.0 ? q * q * q * q : 0.0;
}

Vec TestBump::gradient(const Vec& x) const
{
  const double r2 = radius * radius;
  const double q = 1.0 - (x - center).squaredNorm() / r2;
  if (q <= 0.0) return Vec::Zero(x.size());
  return (-8.0 * q * q * q / r2) * (x - center);
}

std::vector<TestBump> default_test_battery(const Box& box)
{
  const int d = box.dim();
  double side = (box.hi - box.lo).minCoeff();
  std::vector<TestBump> out;
  std::array<int, kMaxDim> idx{};
  for (;;) {
    TestBump t;
    t.center = Vec(d);
    for (int i = 0; i < d; ++i) t.center[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * (idx[i] + 1) / 4.0;
    t.radius = 0.5 * side;
    out.push_back(t);
    int k = d - 1;
    while (k >= 0 && ++idx[k] == 3) idx[k--] = 0;
    if (k < 0) break;
  }
  return out;
}

WeakFormReport weak_form_residual(const std::vector<ParticleMeasure>& snapshots, const ValueFunction& u,
                                  const BField& b, const std::vector<TestBump>& tests)
{
  WeakFormReport r;
  if (snapshots.size() < 3) return r;
  const std::size_t nt = snapshots.size();
  std::vector<std::vector<double>> mass(tests.size(), std::vector<double>(nt));
  for (std::size_t k = 0; k < nt; ++k)
    for (std::size_t j = 0; j < tests.size(); ++j)
      mass[j][k] = integrate_against([&](const Vec& x) { return tests[j].value(x); }, snapshots[k]);

  double acc = 0.0;
  for (std::size_t k = 1; k + 1 < nt; ++k) {
    const auto& m = snapshots[k];
    const double t = m.time_label();
    std::vector<double> flux(tests.size(), 0.0);
    for (const auto& x : m.positions()) {
      const Mat bx = b.matrix(x);
      const Vec dbu = bx.transpose() * u.gradient(x, t, b).grad;
      for (std::size_t j = 0; j < tests.size(); ++j) {
        const Vec g = tests[j].gradient(x);
        if (g.isZero(0.0)) continue;
        flux[j] += (bx.transpose() * g).dot(dbu);
      }
    }
    const double span = snapshots[k + 1].time_label() - snapshots[k - 1].time_label();
    for (std::size_t j = 0; j < tests.size(); ++j) {
      const double dmass = (mass[j][k + 1] - mass[j][k - 1]) / span;
      const double res = std::abs(dmass + flux[j] / static_cast<double>(m.size()));
      r.sup = std::max(r.sup, res);
      acc += res;
      ++r.evaluations;
    }
  }
  r.mean = r.evaluations ? acc / r.evaluations : 0.0;
  return r;
}

}  // namespace ncmfg
