#pragma once

// Triangular dynamics matrix B(x), the Hamiltonian H(x,p) = 1/2 |p B(x)|^2
// and the B-calculus built on it.
//
// Row i of B (0-based) may depend on x_1..x_i only, so D_B phi = D phi . B
// and div_B Phi = div(B Phi) take their usual form.

#include "ncmfg/expr.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/grid.hpp"
#include "ncmfg/linalg.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncmfg {

class BField {
 public:
  // lower[i] holds the entries h_{i,0..i}. Throws ConfigError on shape or
  // dependency violations, or when h11 is not a nonzero constant.
  BField(int dim, std::vector<std::vector<Expression>> lower, std::optional<double> c2_bound = {});

  static BField from_strings(int dim, const std::vector<std::vector<std::string>>& lower);
  static BField identity(int dim);
  static BField grushin(const std::string& h);

  int dim() const { return dim_; }
  const Expression& entry(int i, int j) const { return lower_[i][j]; }
  bool is_constant() const { return constant_; }

  // B(x) without domain checks.
  Mat matrix(const Vec& x) const;
  // B(x) with a domain check when a domain is attached.
  Mat eval_matrix(const Vec& x) const;

  void set_domain(Box domain) { domain_ = std::move(domain); }
  const std::optional<Box>& domain() const { return domain_; }

  // Sup of |h|, first and second derivatives over all entries; estimated by
  // dense sampling of the domain when not supplied.
  double c2_bound() const;
  void set_c2_bound(double c) { c2_ = c; }
  double estimate_c2_bound(const Box& box, int samples_per_axis = 11) const;

  // sup over the box of the spectral norm of B B^T, sampled.
  double sup_bbt_norm(const Box& box, int samples_per_axis = 11) const;
  // sup over the box of |h_ij| per entry, sampled; row-major d x d.
  Mat sup_abs_entries(const Box& box, int samples_per_axis = 11) const;

  // D_x of 1/2 |p B(x)|^2 by forward-mode differentiation.
  Vec grad_x_half_norm_sq(const Vec& x, const Vec& p) const;

 private:
  int dim_;
  std::vector<std::vector<Expression>> lower_;
  std::optional<double> c2_;
  std::optional<Box> domain_;
  bool constant_ = false;
  Mat cached_;
};

double hamiltonian(const BField& b, const Vec& x, const Vec& p);
// p B(x) B(x)^T, returned as a column vector.
Vec dp_hamiltonian(const BField& b, const Vec& x, const Vec& p);

// D_B phi(x) = D phi(x) . B(x) for a field with an analytic gradient.
Vec b_gradient(const Field& phi, const BField& b, const Vec& x, double t = 0.0);
// Gridded version: central differences of the multilinear interpolant with
// step equal to the grid spacing. Throws StencilError when the stencil leaves
// the grid.
Vec b_gradient(const BoxGrid& grid, std::span<const double> values, const BField& b, const Vec& x);

using VectorFieldFn = std::function<Vec(const Vec&)>;
// div_B Phi = sum_ij h_ij d_i Phi_j, Jacobian by central differences.
double b_divergence(const VectorFieldFn& phi, const BField& b, const Vec& x, double step = 1e-5);

// Lifted perturbation x~(v) of the B-differentiability definition:
// x~_1 = x_1 + h11 v_1, x~_i = x_i + sum_{j<=i} h_ij(x~_1..x~_{i-1}) v_j.
Vec lifted_point(const BField& b, const Vec& x, const Vec& v);

struct BDifferentiabilityReport {
  Vec rho;                        // candidate rho_B fitted at the smallest radius
  std::vector<double> radii;
  std::vector<double> residuals;  // sup_v |u(x~)-u(x)-(rho,v)|/|v| per radius
  bool degenerate = false;        // all sampled increments vanished
  std::vector<bool> undetermined; // per component, set only when degenerate
};

BDifferentiabilityReport b_differentiability_probe(const std::function<double(const Vec&)>& u,
                                                   const BField& b, const Vec& x,
                                                   std::span<const double> radii);

}  // namespace ncmfg
