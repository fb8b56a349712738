#pragma once

// Backward Hamilton-Jacobi solver
//
//   -u_t + 1/2 |D u B(x)|^2 = f(x,t),   u(x,T) = g(x)
//
// by a semi-Lagrangian scheme over a discrete control lattice, plus the
// regularity diagnostics and gradient reconstruction used by the feedback
// flow.

#include "ncmfg/bfield.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/grid.hpp"
#include "ncmfg/linalg.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace ncmfg {

struct HjbGridSpec {
  Box box;                   // scenario box: reports and padding check
  double padding = 1.0;      // grid box = box padded on every side
  double dx = 1.0 / 32.0;
  double dt = 0.0;           // 0 selects dt ~ dx / (lattice radius * max(1, |B|))
  double horizon = 1.0;
  int lattice_points = 7;    // coarse control lattice points per axis
  double control_tol = 0.0;  // final lattice spacing; 0 selects dx
  bool check_padding = true;
};

struct RegularityReport {
  double lipschitz_x = 0.0;
  double lipschitz_t = 0.0;
  double semiconcavity_sup = 0.0;
};

struct HjbDiagnostics {
  Vec lipschitz_bound;   // a-priori per-axis bound on the grid box
  Vec lattice_radius;    // per control component
  Vec padding_required;  // per axis
  double dt = 0.0;
  int evals_per_node = 0;
};

class ValueFunction {
 public:
  ValueFunction() = default;
  // values: time-major blocks, block k holds layer t_k = k*T/steps.
  ValueFunction(BoxGrid grid, Box inner, double horizon, int steps, std::vector<double> values);

  const BoxGrid& grid() const { return grid_; }
  const Box& inner_box() const { return inner_; }
  int dim() const { return grid_.dim(); }
  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double dt() const { return horizon_ / steps_; }
  double time(int k) const { return k == steps_ ? horizon_ : k * dt(); }

  std::span<const double> layer(int k) const
  {
    return {values_.data() + static_cast<std::size_t>(k) * grid_.size(), grid_.size()};
  }
  const std::vector<double>& values() const { return values_; }

  const RegularityReport& regularity() const { return regularity_; }
  const HjbDiagnostics& diagnostics() const { return diag_; }
  void set_diagnostics(HjbDiagnostics d) { diag_ = std::move(d); }

  // One-sided slope mismatch above which a node counts as a kink, per axis.
  double kink_threshold(int axis) const;

  struct GradientSample {
    Vec grad;
    bool kink = false;
  };
  // Central differences at a node; at detected kinks the one-sided
  // combination with the least Hamiltonian is used.
  GradientSample nodal_gradient(std::size_t node, int k, const BField& b) const;
  // D_x u at (x, t): multilinear in space over nodal gradients, linear in time.
  GradientSample gradient(const Vec& x, double t, const BField& b) const;

  void write_csv(const std::filesystem::path& path, int layer_stride = 1) const;
  // Layout: magic "NCMFGVF1", int32 dim, int32 counts[dim], f64 lo[dim],
  // f64 hi[dim], f64 inner_lo[dim], f64 inner_hi[dim], f64 horizon,
  // int32 steps, then f64 values in time-major blocks of row-major nodes.
  // Host byte order.
  void save_binary(const std::filesystem::path& path) const;
  static ValueFunction load_binary(const std::filesystem::path& path);

 private:
  friend RegularityReport compute_regularity(const ValueFunction& u);

  BoxGrid grid_;
  Box inner_;
  double horizon_ = 1.0;
  int steps_ = 1;
  std::vector<double> values_;
  RegularityReport regularity_;
  HjbDiagnostics diag_;
};

ValueFunction solve_hjb(const Field& f, const Field& g, const BField& b, const HjbGridSpec& spec);

// Multilinear in space, linear in time. Throws OutOfDomainError outside the grid.
double value_at(const ValueFunction& u, const Vec& x, double t);

struct BGradientSample {
  Vec value;
  bool kink = false;
};
// D_B u = D_x u . B(x); throws StencilError outside the grid.
BGradientSample numeric_b_gradient(const ValueFunction& u, const BField& b, const Vec& x, double t);

// Finite-difference regularity estimates over the nodes of the inner box.
RegularityReport regularity_report(const ValueFunction& u);

struct ValueBound {
  double sup_u = 0.0;
  double sup_f = 0.0;  // over grid nodes and layer times
  double sup_g = 0.0;
  double bound = 0.0;  // T sup|f| + sup|g|
  bool ok = false;     // sup_u <= bound + tol
};

ValueBound value_bound(const ValueFunction& u, const Field& f, const Field& g, double tol = 1e-6);

}  // namespace ncmfg
