#pragma once

#include <array>
#include <cmath>

namespace ncmfg {

// Forward-mode dual number carrying N partial derivatives.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: constants promote implicitly

  static Dual variable(double value, int slot)
  {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  // Chain rule for a unary function with value fv and derivative dfv.
  Dual chain(double fv, double dfv) const
  {
    Dual r(fv);
    for (int i = 0; i < N; ++i) r.d[i] = dfv * d[i];
    return r;
  }
};

template <int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

template <int N>
Dual<N> operator-(const Dual<N>& a)
{
  return a.chain(-a.v, -1.0);
}

template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b)
{
  Dual<N> r(a.v / b.v);
  const double inv2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return r;
}

template <int N>
Dual<N> sin(const Dual<N>& a) { return a.chain(std::sin(a.v), std::cos(a.v)); }

template <int N>
Dual<N> cos(const Dual<N>& a) { return a.chain(std::cos(a.v), -std::sin(a.v)); }

template <int N>
Dual<N> exp(const Dual<N>& a)
{
  const double e = std::exp(a.v);
  return a.chain(e, e);
}

template <int N>
Dual<N> log(const Dual<N>& a) { return a.chain(std::log(a.v), 1.0 / a.v); }

template <int N>
Dual<N> sqrt(const Dual<N>& a)
{
  const double s = std::sqrt(a.v);
  return a.chain(s, 0.5 / s);
}

// a^c for a constant exponent c.
template <int N>
Dual<N> pow(const Dual<N>& a, double c)
{
  if (c == 0.0) return Dual<N>(1.0);
  return a.chain(std::pow(a.v, c), c * std::pow(a.v, c - 1.0));
}

template <int N>
Dual<N> pow(const Dual<N>& a, const Dual<N>& b)
{
  bool constant_exponent = true;
  for (double x : b.d) constant_exponent = constant_exponent && x == 0.0;
  if (constant_exponent) return pow(a, b.v);
  return exp(b * log(a));
}

}  // namespace ncmfg
