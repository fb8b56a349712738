#include "ncmfg/hjb.hpp"

#include "ncmfg/errors.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace ncmfg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool in_box(const Vec& x, const Box& b)
{
  return b.contains(x, 1e-9);
}

// Semi-Lagrangian update for one layer in dimension D.
template <int D>
class LayerSolver {
 public:
  LayerSolver(const BoxGrid& grid, const std::vector<double>& bnodes, bool constant_b,
              const Vec& radius, int lattice_points, double tol, double dt)
      : grid_(grid), bnodes_(bnodes), constant_b_(constant_b), np_(lattice_points), dt_(dt), tol_(tol)
  {
    for (int i = 0; i < D; ++i) {
      radius_[i] = radius[i];
      lo_[i] = grid.box().lo[i];
      inv_h_[i] = 1.0 / grid.spacing(i);
      n_[i] = grid.count(i);
      stride_[i] = grid.stride(i);
    }
    int total = 1;
    for (int i = 0; i < D; ++i) total *= 3;
    for (int c = 0; c < total; ++c) {
      std::array<int, D> o{};
      int r = c;
      bool zero = true;
      for (int i = 0; i < D; ++i) {
        o[i] = r % 3 - 1;
        r /= 3;
        zero = zero && o[i] == 0;
      }
      if (!zero) stencil_.push_back(o);
    }
  }

  int evals_per_node() const
  {
    int coarse = 1;
    for (int i = 0; i < D; ++i) coarse *= np_;
    return coarse + passes() * static_cast<int>(stencil_.size());
  }

  void run(const double* prev, double* next, const std::vector<double>& f_nodes) const
  {
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, grid_.size(), 256),
                      [&](const tbb::blocked_range<std::size_t>& r) {
                        for (std::size_t n = r.begin(); n != r.end(); ++n)
                          next[n] = solve_node(prev, n, f_nodes[n]);
                      });
  }

 private:
  int passes() const
  {
    double delta = 0.0;
    for (int i = 0; i < D; ++i) delta = std::max(delta, coarse_spacing(i) / 2.0);
    int p = 0;
    for (;;) {
      ++p;
      if (delta <= tol_ || p > 60) break;
      delta /= 2.0;
    }
    return p;
  }

  double coarse_spacing(int i) const { return np_ > 1 ? 2.0 * radius_[i] / (np_ - 1) : 0.0; }

  double interp(const double* v, const std::array<double, D>& y) const
  {
    std::array<double, D> w;
    std::size_t base = 0;
    for (int i = 0; i < D; ++i) {
      double s = (y[i] - lo_[i]) * inv_h_[i];
      const double smax = n_[i] - 1;
      if (!(s > 0.0)) s = 0.0;
      if (s > smax) s = smax;
      int c = static_cast<int>(s);
      if (c > n_[i] - 2) c = n_[i] - 2;
      w[i] = s - c;
      base += static_cast<std::size_t>(c) * stride_[i];
    }
    if constexpr (D == 1) {
      return v[base] + w[0] * (v[base + 1] - v[base]);
    } else if constexpr (D == 2) {
      const double* p = v + base;
      const std::size_t s0 = stride_[0];
      const double a = p[0] + w[1] * (p[1] - p[0]);
      const double b = p[s0] + w[1] * (p[s0 + 1] - p[s0]);
      return a + w[0] * (b - a);
    } else {
      double acc = 0.0;
      for (int corner = 0; corner < (1 << D); ++corner) {
        double wt = 1.0;
        std::size_t off = base;
        for (int i = 0; i < D; ++i) {
          if (corner & (1 << i)) {
            wt *= w[i];
            off += stride_[i];
          } else {
            wt *= 1.0 - w[i];
          }
        }
        acc += wt * v[off];
      }
      return acc;
    }
  }

  double solve_node(const double* prev, std::size_t node, double fx) const
  {
    std::array<double, D> x;
    {
      std::size_t rem = node;
      for (int i = 0; i < D; ++i) {
        const std::size_t k = rem / stride_[i];
        rem -= k * stride_[i];
        x[i] = static_cast<int>(k) == n_[i] - 1 ? grid_.box().hi[i] : lo_[i] + k / inv_h_[i];
      }
    }
    const double* B = bnodes_.data() + (constant_b_ ? 0 : node * D * D);

    auto objective = [&](const std::array<double, D>& a) {
      std::array<double, D> y;
      double a2 = 0.0;
      for (int i = 0; i < D; ++i) {
        double s = 0.0;
        for (int j = 0; j <= i; ++j) s += B[i * D + j] * a[j];
        y[i] = x[i] + dt_ * s;
        a2 += a[i] * a[i];
      }
      return dt_ * (0.5 * a2 + fx) + interp(prev, y);
    };

    std::array<double, D> best_a{};
    double best = kInf;
    std::array<int, D> idx{};
    std::array<double, D> a;
    for (;;) {
      for (int i = 0; i < D; ++i) a[i] = np_ > 1 ? -radius_[i] + idx[i] * coarse_spacing(i) : 0.0;
      const double v = objective(a);
      if (v < best) {
        best = v;
        best_a = a;
      }
      int k = D - 1;
      while (k >= 0 && ++idx[k] == np_) idx[k--] = 0;
      if (k < 0) break;
    }

    std::array<double, D> delta;
    for (int i = 0; i < D; ++i) delta[i] = coarse_spacing(i) / 2.0;
    for (int pass = 0; pass < 61; ++pass) {
      const std::array<double, D> center = best_a;
      for (const auto& o : stencil_) {
        for (int i = 0; i < D; ++i) a[i] = center[i] + o[i] * delta[i];
        const double v = objective(a);
        if (v < best) {
          best = v;
          best_a = a;
        }
      }
      double dmax = 0.0;
      for (int i = 0; i < D; ++i) dmax = std::max(dmax, delta[i]);
      if (dmax <= tol_) break;
      for (int i = 0; i < D; ++i) delta[i] /= 2.0;
    }
    return best;
  }

  const BoxGrid& grid_;
  const std::vector<double>& bnodes_;
  bool constant_b_;
  int np_;
  double dt_;
  double tol_;
  std::array<double, D> radius_{};
  std::array<double, D> lo_{};
  std::array<double, D> inv_h_{};
  std::array<int, D> n_{};
  std::array<std::size_t, D> stride_{};
  std::vector<std::array<int, D>> stencil_;
};

template <int D>
int march(const BoxGrid& grid, const std::vector<double>& bnodes, bool constant_b, const Vec& radius,
          const HjbGridSpec& spec, double tol, int steps, double dt, const Field& f,
          std::vector<double>& values)
{
  LayerSolver<D> solver(grid, bnodes, constant_b, radius, spec.lattice_points, tol, dt);
  std::vector<double> fx(grid.size());
  for (int k = steps - 1; k >= 0; --k) {
    f.tabulate(grid, k * dt, fx);
    const double* prev = values.data() + static_cast<std::size_t>(k + 1) * grid.size();
    double* next = values.data() + static_cast<std::size_t>(k) * grid.size();
    solver.run(prev, next, fx);
  }
  return solver.evals_per_node();
}

// Per-axis maximum of |nodal derivative| over nodes selected by `keep`.
template <class Keep>
Vec max_abs_derivative(const BoxGrid& grid, const std::vector<double>& v, Keep&& keep)
{
  Vec m = Vec::Zero(grid.dim());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    if (!keep(n)) continue;
    const auto idx = grid.multi_index(n);
    for (int a = 0; a < grid.dim(); ++a)
      m[a] = std::max(m[a], std::abs(nodal_derivative(grid, v, idx, a)));
  }
  return m;
}

}  // namespace

ValueFunction::ValueFunction(BoxGrid grid, Box inner, double horizon, int steps, std::vector<double> values)
    : grid_(std::move(grid)), inner_(std::move(inner)), horizon_(horizon), steps_(steps), values_(std::move(values))
{
  if (steps_ < 1) throw ContractError("value function needs at least one time step");
  if (values_.size() != grid_.size() * static_cast<std::size_t>(steps_ + 1))
    throw ContractError("value array does not match grid and time steps");
  regularity_ = compute_regularity(*this);
}

RegularityReport compute_regularity(const ValueFunction& u)
{
  const BoxGrid& g = u.grid();
  const int d = g.dim();
  std::vector<char> inside(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) inside[n] = in_box(g.node(n), u.inner_box());

  RegularityReport r;
  for (int k = 0; k <= u.steps(); ++k) {
    const auto v = u.layer(k);
    for (std::size_t n = 0; n < g.size(); ++n) {
      if (!inside[n]) continue;
      const auto idx = g.multi_index(n);
      for (int a = 0; a < d; ++a) {
        const std::size_t s = g.stride(a);
        const double h = g.spacing(a);
        if (idx[a] + 1 < g.count(a) && inside[n + s])
          r.lipschitz_x = std::max(r.lipschitz_x, std::abs(v[n + s] - v[n]) / h);
        if (idx[a] > 0 && idx[a] + 1 < g.count(a) && inside[n + s] && inside[n - s])
          r.semiconcavity_sup = std::max(r.semiconcavity_sup, (v[n + s] - 2.0 * v[n] + v[n - s]) / (h * h));
      }
      if (k < u.steps()) {
        const auto w = u.layer(k + 1);
        r.lipschitz_t = std::max(r.lipschitz_t, std::abs(w[n] - v[n]) / u.dt());
      }
    }
  }
  return r;
}

RegularityReport regularity_report(const ValueFunction& u) { return compute_regularity(u); }

ValueBound value_bound(const ValueFunction& u, const Field& f, const Field& g, double tol)
{
  ValueBound r;
  const BoxGrid& grid = u.grid();
  std::vector<double> v(grid.size());
  for (int k = 0; k <= u.steps(); ++k) {
    f.tabulate(grid, u.time(k), v);
    for (double x : v) r.sup_f = std::max(r.sup_f, std::abs(x));
    for (double x : u.layer(k)) r.sup_u = std::max(r.sup_u, std::abs(x));
  }
  g.tabulate(grid, u.horizon(), v);
  for (double x : v) r.sup_g = std::max(r.sup_g, std::abs(x));
  r.bound = u.horizon() * r.sup_f + r.sup_g;
  r.ok = r.sup_u <= r.bound + tol;
  return r;
}

double ValueFunction::kink_threshold(int axis) const
{
  return 10.0 * grid_.spacing(axis) * std::max(regularity_.semiconcavity_sup, 1.0);
}

ValueFunction::GradientSample ValueFunction::nodal_gradient(std::size_t node, int k, const BField& b) const
{
  const int d = dim();
  const auto v = layer(k);
  const auto idx = grid_.multi_index(node);
  GradientSample out{Vec(d), false};
  std::array<double, kMaxDim> minus{}, plus{};
  std::array<bool, kMaxDim> kink{};
  for (int a = 0; a < d; ++a) {
    const int i = idx[a];
    if (i == 0 || i == grid_.count(a) - 1) {
      out.grad[a] = nodal_derivative(grid_, v, idx, a);
      continue;
    }
    const std::size_t s = grid_.stride(a);
    const double h = grid_.spacing(a);
    minus[a] = (v[node] - v[node - s]) / h;
    plus[a] = (v[node + s] - v[node]) / h;
    out.grad[a] = 0.5 * (minus[a] + plus[a]);
    if (std::abs(plus[a] - minus[a]) > kink_threshold(a)) {
      kink[a] = true;
      out.kink = true;
    }
  }
  if (!out.kink) return out;

  const Mat bx = b.matrix(grid_.node(node));
  double best = kInf;
  Vec best_g = out.grad;
  for (int combo = 0; combo < (1 << d); ++combo) {
    bool valid = true;
    Vec p = out.grad;
    for (int a = 0; a < d; ++a) {
      const bool pick_plus = combo & (1 << a);
      if (!kink[a]) {
        if (pick_plus) valid = false;
        continue;
      }
      p[a] = pick_plus ? plus[a] : minus[a];
    }
    if (!valid) continue;
    const double h = 0.5 * (bx.transpose() * p).squaredNorm();
    if (h < best) {
      best = h;
      best_g = p;
    }
  }
  out.grad = best_g;
  return out;
}

ValueFunction::GradientSample ValueFunction::gradient(const Vec& x, double t, const BField& b) const
{
  const int d = dim();
  std::array<int, kMaxDim> cell;
  std::array<double, kMaxDim> w;
  grid_.locate(x, cell, w);

  double s = t / dt();
  if (!(s > 0.0)) s = 0.0;
  if (s > steps_) s = steps_;
  int k = static_cast<int>(s);
  if (k > steps_ - 1) k = steps_ - 1;
  const double wt = s - k;

  GradientSample out{Vec::Zero(d), false};
  for (int layer_off = 0; layer_off < 2; ++layer_off) {
    const double tw = layer_off == 0 ? 1.0 - wt : wt;
    if (tw == 0.0) continue;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double cw = tw;
      std::array<int, kMaxDim> idx = cell;
      for (int i = 0; i < d; ++i) {
        if (corner & (1 << i)) {
          cw *= w[i];
          ++idx[i];
        } else {
          cw *= 1.0 - w[i];
        }
      }
      if (cw == 0.0) continue;
      const GradientSample g = nodal_gradient(grid_.flat_index(idx), k + layer_off, b);
      out.grad += cw * g.grad;
      out.kink = out.kink || g.kink;
    }
  }
  return out;
}

ValueFunction solve_hjb(const Field& f, const Field& g, const BField& b, const HjbGridSpec& spec)
{
  const int d = b.dim();
  if (spec.box.dim() != d) throw ConfigError("scenario box dimension does not match bfield");
  if (!(spec.horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(spec.padding >= 0.0)) throw ConfigError("padding must be nonnegative");
  if (spec.lattice_points < 1) throw ConfigError("lattice needs at least one point per axis");

  BoxGrid grid(spec.box.padded(spec.padding), spec.dx);
  const double T = spec.horizon;

  std::vector<Vec> nodes(grid.size());
  std::vector<char> inside(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) {
    nodes[n] = grid.node(n);
    inside[n] = in_box(nodes[n], spec.box);
  }

  std::vector<double> bnodes;
  Mat sup_grid = Mat::Zero(d, d), sup_box_bbt = Mat::Zero(d, d);
  double sup_b_norm = 0.0;
  if (b.is_constant()) {
    const Mat m = b.matrix(nodes[0]);
    bnodes.resize(d * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) bnodes[i * d + j] = m(i, j);
    sup_grid = m.cwiseAbs();
    sup_box_bbt = (m * m.transpose()).cwiseAbs();
    sup_b_norm = m.cwiseAbs().rowwise().sum().maxCoeff();
  } else {
    bnodes.resize(grid.size() * d * d);
    for (std::size_t n = 0; n < grid.size(); ++n) {
      const Mat m = b.matrix(nodes[n]);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) bnodes[n * d * d + i * d + j] = m(i, j);
      sup_grid = sup_grid.cwiseMax(m.cwiseAbs());
      sup_b_norm = std::max(sup_b_norm, m.cwiseAbs().rowwise().sum().maxCoeff());
      if (inside[n]) sup_box_bbt = sup_box_bbt.cwiseMax((m * m.transpose()).cwiseAbs());
    }
  }

  // Terminal layer and a-priori Lipschitz bounds |Dg| + T |Df| per axis.
  std::vector<double> gv(grid.size());
  g.tabulate(grid, T, gv);
  auto all = [](std::size_t) { return true; };
  auto box_only = [&](std::size_t n) { return inside[n] != 0; };
  Vec l_grid = max_abs_derivative(grid, gv, all);
  Vec l_box = max_abs_derivative(grid, gv, box_only);
  {
    std::vector<double> fv(grid.size());
    Vec fg = Vec::Zero(d), fb = Vec::Zero(d);
    for (int s = 0; s <= 4; ++s) {
      const double t = T * s / 4.0;
      f.tabulate(grid, t, fv);
      fg = fg.cwiseMax(max_abs_derivative(grid, fv, all));
      fb = fb.cwiseMax(max_abs_derivative(grid, fv, box_only));
    }
    l_grid += T * fg;
    l_box += T * fb;
  }

  // Optimal controls are a = -Du B, so |a_j| <= sum_k L_k |h_kj|.
  Vec radius(d);
  for (int j = 0; j < d; ++j) {
    double r = 0.0;
    for (int k = 0; k < d; ++k) r += l_grid[k] * sup_grid(k, j);
    radius[j] = std::max(2.0 * r, 1e-8);
  }

  // Characteristics x' = -Du B B^T leave the scenario box at speed
  // sum_k L_k |(B B^T)_ki| along axis i.
  Vec required(d);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += l_box[k] * sup_box_bbt(k, i);
    required[i] = T * s;
  }
  if (spec.check_padding) {
    for (int i = 0; i < d; ++i) {
      if (spec.padding < required[i] - 1e-9) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "padding %.6g insufficient on axis %d: need at least %.6g",
                      spec.padding, i + 1, required[i]);
        throw ConfigError(buf, "padding-insufficient");
      }
    }
  }

  int steps;
  if (spec.dt > 0.0) {
    steps = std::max(1, static_cast<int>(std::ceil(T / spec.dt - 1e-9)));
  } else {
    const double dt_req = spec.dx / (radius.maxCoeff() * std::max(1.0, sup_b_norm));
    steps = std::max(1, static_cast<int>(std::ceil(T / dt_req - 1e-9)));
  }
  const double dt = T / steps;
  const double tol = spec.control_tol > 0.0 ? spec.control_tol : spec.dx;

  std::vector<double> values(grid.size() * static_cast<std::size_t>(steps + 1));
  std::copy(gv.begin(), gv.end(), values.begin() + static_cast<std::ptrdiff_t>(steps * grid.size()));

  int evals = 0;
  const bool cb = b.is_constant();
  switch (d) {
    case 1: evals = march<1>(grid, bnodes, cb, radius, spec, tol, steps, dt, f, values); break;
    case 2: evals = march<2>(grid, bnodes, cb, radius, spec, tol, steps, dt, f, values); break;
    case 3: evals = march<3>(grid, bnodes, cb, radius, spec, tol, steps, dt, f, values); break;
    default: evals = march<4>(grid, bnodes, cb, radius, spec, tol, steps, dt, f, values); break;
  }

  ValueFunction u(std::move(grid), spec.box, T, steps, std::move(values));
  HjbDiagnostics diag;
  diag.lipschitz_bound = l_grid;
  diag.lattice_radius = radius;
  diag.padding_required = required;
  diag.dt = dt;
  diag.evals_per_node = evals;
  u.set_diagnostics(std::move(diag));
  return u;
}

double value_at(const ValueFunction& u, const Vec& x, double t)
{
  if (x.size() != u.dim()) throw ContractError("point dimension does not match value function");
  if (!u.grid().box().contains(x, 1e-12) || t < -1e-12 || t > u.horizon() + 1e-12)
    throw OutOfDomainError("(x, t) outside the value-function grid");
  double s = std::clamp(t / u.dt(), 0.0, static_cast<double>(u.steps()));
  int k = std::min(static_cast<int>(s), u.steps() - 1);
  const double w = s - k;
  const double a = u.grid().interpolate(u.layer(k), x);
  if (w == 0.0) return a;
  return a + w * (u.grid().interpolate(u.layer(k + 1), x) - a);
}

BGradientSample numeric_b_gradient(const ValueFunction& u, const BField& b, const Vec& x, double t)
{
  if (!u.grid().box().contains(x, 1e-12) || t < -1e-12 || t > u.horizon() + 1e-12)
    throw StencilError("gradient requested outside the value-function grid");
  const auto g = u.gradient(x, t, b);
  return {b.matrix(x).transpose() * g.grad, g.kink};
}

void ValueFunction::write_csv(const std::filesystem::path& path, int layer_stride) const
{
  std::FILE* fp = std::fopen(path.string().c_str(), "w");
  if (!fp) throw Error("io", "cannot open " + path.string());
  std::fputs("t", fp);
  for (int i = 0; i < dim(); ++i) std::fprintf(fp, ",x%d", i + 1);
  std::fputs(",u\n", fp);
  std::vector<Vec> nodes(grid_.size());
  for (std::size_t n = 0; n < grid_.size(); ++n) nodes[n] = grid_.node(n);
  for (int k = 0; k <= steps_; ++k) {
    if (k % layer_stride != 0 && k != steps_) continue;
    const auto v = layer(k);
    const double t = time(k);
    for (std::size_t n = 0; n < grid_.size(); ++n) {
      std::fprintf(fp, "%.17e", t);
      for (int i = 0; i < dim(); ++i) std::fprintf(fp, ",%.17e", nodes[n][i]);
      std::fprintf(fp, ",%.17e\n", v[n]);
    }
  }
  std::fclose(fp);
}

namespace {
constexpr char kMagic[8] = {'N', 'C', 'M', 'F', 'G', 'V', 'F', '1'};

template <class T>
void put(std::ofstream& os, T v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

template <class T>
T get(std::ifstream& is)
{
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("io", "truncated value-function file");
  return v;
}
}  // namespace

void ValueFunction::save_binary(const std::filesystem::path& path) const
{
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("io", "cannot open " + path.string());
  os.write(kMagic, 8);
  const int d = dim();
  put<std::int32_t>(os, d);
  for (int i = 0; i < d; ++i) put<std::int32_t>(os, grid_.count(i));
  for (int i = 0; i < d; ++i) put(os, grid_.box().lo[i]);
  for (int i = 0; i < d; ++i) put(os, grid_.box().hi[i]);
  for (int i = 0; i < d; ++i) put(os, inner_.lo[i]);
  for (int i = 0; i < d; ++i) put(os, inner_.hi[i]);
  put(os, horizon_);
  put<std::int32_t>(os, steps_);
  os.write(reinterpret_cast<const char*>(values_.data()),
           static_cast<std::streamsize>(values_.size() * sizeof(double)));
}

ValueFunction ValueFunction::load_binary(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("io", "cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw Error("io", "not a value-function file");
  const int d = get<std::int32_t>(is);
  if (d < 1 || d > kMaxDim) throw Error("io", "bad dimension in value-function file");
  std::array<int, kMaxDim> counts{};
  for (int i = 0; i < d; ++i) counts[i] = get<std::int32_t>(is);
  Box box{Vec(d), Vec(d)}, inner{Vec(d), Vec(d)};
  for (int i = 0; i < d; ++i) box.lo[i] = get<double>(is);
  for (int i = 0; i < d; ++i) box.hi[i] = get<double>(is);
  for (int i = 0; i < d; ++i) inner.lo[i] = get<double>(is);
  for (int i = 0; i < d; ++i) inner.hi[i] = get<double>(is);
  const double horizon = get<double>(is);
  const int steps = get<std::int32_t>(is);
  BoxGrid grid(box, counts);
  std::vector<double> values(grid.size() * static_cast<std::size_t>(steps + 1));
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!is) throw Error("io", "truncated value-function file");
  return ValueFunction(std::move(grid), std::move(inner), horizon, steps, std::move(values));
}

}  // namespace ncmfg
