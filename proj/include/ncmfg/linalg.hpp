#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace ncmfg {

// Largest state dimension supported. Vectors and matrices live on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec zeros(int dim) { return Vec::Zero(dim); }

inline Vec make_vec(std::initializer_list<double> xs)
{
  Vec v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Axis-aligned box [lo, hi].
struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vec& x, double tol = 1e-12) const
  {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
    return true;
  }

  Box padded(double pad) const
  {
    return Box{(lo.array() - pad).matrix(), (hi.array() + pad).matrix()};
  }

  Vec center() const { return 0.5 * (lo + hi); }
};

}  // namespace ncmfg
