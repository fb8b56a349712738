#include "ncmfg/grid.hpp"

#include "ncmfg/errors.hpp"

#include <cmath>

namespace ncmfg {

BoxGrid::BoxGrid(Box box, double dx) : box_(std::move(box))
{
  if (!(dx > 0.0)) throw ConfigError("grid spacing must be positive");
  for (int i = 0; i < dim(); ++i) {
    const double len = box_.hi[i] - box_.lo[i];
    if (!(len > 0.0)) throw ConfigError("grid box must have positive extent");
    n_[i] = static_cast<int>(std::lround(len / dx)) + 1;
    if (n_[i] < 3) n_[i] = 3;
  }
  init();
}

BoxGrid::BoxGrid(Box box, std::array<int, kMaxDim> counts) : box_(std::move(box)), n_(counts)
{
  for (int i = 0; i < dim(); ++i)
    if (n_[i] < 2) throw ConfigError("grid needs at least two nodes per axis");
  init();
}

void BoxGrid::init()
{
  const int d = dim();
  if (d < 1 || d > kMaxDim) throw ConfigError("unsupported grid dimension");
  size_ = 1;
  for (int i = d - 1; i >= 0; --i) {
    h_[i] = (box_.hi[i] - box_.lo[i]) / (n_[i] - 1);
    stride_[i] = size_;
    size_ *= static_cast<std::size_t>(n_[i]);
  }
}

std::array<int, kMaxDim> BoxGrid::multi_index(std::size_t flat) const
{
  std::array<int, kMaxDim> idx{};
  for (int i = 0; i < dim(); ++i) {
    idx[i] = static_cast<int>(flat / stride_[i]);
    flat -= static_cast<std::size_t>(idx[i]) * stride_[i];
  }
  return idx;
}

std::size_t BoxGrid::flat_index(const std::array<int, kMaxDim>& idx) const
{
  std::size_t f = 0;
  for (int i = 0; i < dim(); ++i) f += static_cast<std::size_t>(idx[i]) * stride_[i];
  return f;
}

Vec BoxGrid::node(const std::array<int, kMaxDim>& idx) const
{
  Vec x(dim());
  for (int i = 0; i < dim(); ++i)
    x[i] = idx[i] == n_[i] - 1 ? box_.hi[i] : box_.lo[i] + idx[i] * h_[i];
  return x;
}

Vec BoxGrid::node(std::size_t flat) const { return node(multi_index(flat)); }

void BoxGrid::locate(const Vec& x, std::array<int, kMaxDim>& cell,
                     std::array<double, kMaxDim>& w) const
{
  for (int i = 0; i < dim(); ++i) {
    double s = (x[i] - box_.lo[i]) / h_[i];
    const double smax = n_[i] - 1;
    if (!(s > 0.0)) s = 0.0;  // also maps NaN to the boundary
    if (s > smax) s = smax;
    int c = static_cast<int>(s);
    if (c > n_[i] - 2) c = n_[i] - 2;
    cell[i] = c;
    w[i] = s - c;
  }
}

double BoxGrid::interpolate(std::span<const double> values, const Vec& x) const
{
  std::array<int, kMaxDim> cell;
  std::array<double, kMaxDim> w;
  locate(x, cell, w);
  const int d = dim();
  std::size_t base = 0;
  for (int i = 0; i < d; ++i) base += static_cast<std::size_t>(cell[i]) * stride_[i];

  if (d == 2) {
    const double* p = values.data() + base;
    const std::size_t s0 = stride_[0];
    const double a = p[0] + w[1] * (p[1] - p[0]);
    const double b = p[s0] + w[1] * (p[s0 + 1] - p[s0]);
    return a + w[0] * (b - a);
  }
  double acc = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double wt = 1.0;
    std::size_t off = base;
    for (int i = 0; i < d; ++i) {
      if (corner & (1 << i)) {
        wt *= w[i];
        off += stride_[i];
      } else {
        wt *= 1.0 - w[i];
      }
    }
    if (wt != 0.0) acc += wt * values[off];
  }
  return acc;
}

bool BoxGrid::operator==(const BoxGrid& o) const
{
  if (dim() != o.dim()) return false;
  for (int i = 0; i < dim(); ++i)
    if (n_[i] != o.n_[i] || box_.lo[i] != o.box_.lo[i] || box_.hi[i] != o.box_.hi[i])
      return false;
  return true;
}

double nodal_derivative(const BoxGrid& grid, std::span<const double> values,
                        const std::array<int, kMaxDim>& idx, int axis)
{
  const int n = grid.count(axis);
  const double h = grid.spacing(axis);
  const std::size_t s = grid.stride(axis);
  const std::size_t f = grid.flat_index(idx);
  if (n < 3) return (values[f + s] - values[f]) / h;
  if (idx[axis] == 0)
    return (-3.0 * values[f] + 4.0 * values[f + s] - values[f + 2 * s]) / (2.0 * h);
  if (idx[axis] == n - 1)
    return (3.0 * values[f] - 4.0 * values[f - s] + values[f - 2 * s]) / (2.0 * h);
  return (values[f + s] - values[f - s]) / (2.0 * h);
}

}  // namespace ncmfg
