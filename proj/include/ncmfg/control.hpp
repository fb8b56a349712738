#pragma once

// Controlled dynamics x' = B(x) a, the cost functional, the Pontryagin
// boundary-value problem and the checks built on it.

#include "ncmfg/bfield.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/linalg.hpp"

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace ncmfg {

class ControlPath {
 public:
  enum class Interp { Constant, Linear };

  // values[k] is attached to knots[k]. Piecewise-constant paths hold
  // values[k] on [knots[k], knots[k+1]); the last value is unused.
  ControlPath(std::vector<double> knots, std::vector<Vec> values, Interp interp = Interp::Constant);

  static ControlPath constant(const Vec& a, double t_start, double t_end, int segments = 1);
  static ControlPath piecewise(const std::vector<Vec>& per_segment, double t_start, double t_end);

  double t_start() const { return knots_.front(); }
  double t_end() const { return knots_.back(); }
  int segments() const { return static_cast<int>(knots_.size()) - 1; }
  int dim() const { return static_cast<int>(values_.front().size()); }
  Interp interp() const { return interp_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vec>& values() const { return values_; }

  // Value inside segment k at time s (s in [knots[k], knots[k+1]]).
  Vec on_segment(int k, double s) const;
  Vec at(double s) const;
  double l2_squared() const;

 private:
  std::vector<double> knots_;
  std::vector<Vec> values_;
  Interp interp_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  // Sample index where each control segment starts, plus the final index.
  std::vector<int> segment_start;
  // Control realized at each sample (filled by the feedback flow).
  std::vector<Vec> controls;
};

// RK4 with `substeps` fixed steps per control segment. With a guard box the
// trajectory is checked after every step; leaving it raises ExcursionError.
Trajectory integrate_dynamics(const Vec& x0, const ControlPath& a, const BField& b, int substeps = 32,
                              const std::optional<Box>& guard = {});

// Composite Simpson per segment of 1/2|a|^2 + f, plus g(x(T)).
double cost(const Trajectory& traj, const ControlPath& a, const Field& f, const Field& g);

// Simpson weights for samples of a uniform grid; an odd interval count closes
// with the 3/8 rule on the last three intervals.
std::vector<double> simpson_weights(int intervals, double h);

struct PontryaginRhs {
  Vec x_dot;
  Vec p_dot;
};
// x' = B B^T p, p' = -1/2 D_x|p B|^2 + D_x f. adjoint_sign multiplies the
// B-dependent adjoint drift and exists for fault injection only.
PontryaginRhs pontryagin_rhs(double s, const Vec& x, const Vec& p, const Field& f, const BField& b,
                             double adjoint_sign = 1.0);

struct ExtremalPath {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> adjoints;
  std::vector<Vec> controls;  // p B(x)
  Vec p0;
  double terminal_defect = 0.0;
  double cost = 0.0;
  bool spurious = false;

  int steps() const { return static_cast<int>(times.size()) - 1; }
  double t_start() const { return times.front(); }
  double t_end() const { return times.back(); }
  void write_csv(const std::filesystem::path& path) const;
};

struct OptimalSet {
  ExtremalPath representative;
  std::vector<ExtremalPath> alternates;  // distinct extremals, ranked by cost
  std::vector<ExtremalPath> converged;   // every converged start, in start order
  double value = 0.0;
  double zero_control_cost = 0.0;
  bool spurious = false;
};

struct ShootingConfig {
  double bvp_tol = 1e-9;
  int n_starts = 9;
  double start_scale = 0.0;  // 0: Lipschitz bound of g sampled near x0
  double sanity_margin = 1e-8;
  int steps_per_unit = 256;
  int steps = 0;             // explicit step count; overrides steps_per_unit
  int max_newton = 60;
  double fd_step = 1e-6;
  double dedup_tol = 1e-7;
  double tie_tol = 1e-10;
  double adjoint_sign = 1.0;
  std::optional<Box> guard;  // starts whose path leaves it are discarded
};

int shooting_steps(double t, double T, const ShootingConfig& cfg);

// Integrates the Pontryagin system forward from (x0, p0) on N uniform steps.
ExtremalPath integrate_extremal(const Vec& x0, const Vec& p0, double t, double T, int steps, const Field& f,
                                const Field& g, const BField& b, double adjoint_sign = 1.0);

OptimalSet solve_bvp_shooting(const Vec& x0, double t, double T, const Field& f, const Field& g, const BField& b,
                              const ShootingConfig& cfg = {});

struct OracleConfig {
  int n_steps = 8;
  int grid_points = 17;    // per axis, constant-control scan
  int starts = 3;
  int substeps = 32;
  double radius = 0.0;     // 0: 2 * |grad g| sampled near x0, at least 1
  double refine_tol = 1e-5;
  int max_sweeps = 4000;
};

struct OracleResult {
  std::vector<Vec> controls;  // per segment
  double cost = 0.0;
  std::vector<double> trace;  // best cost after each step-size level
  int evaluations = 0;
};

OracleResult direct_minimize_oracle(const Vec& x0, double t, double T, const Field& f, const Field& g,
                                    const BField& b, const OracleConfig& cfg = {});

struct FlowConfig {
  int substeps = 2;  // RK4 steps per value-function time step
};

// x' = -D_x u B B^T from (x0, t0) to t1 with kink-aware gradients. The lifted
// control a = -D_x u B is stored per sample.
Trajectory feedback_flow(const Vec& x0, double t0, double t1, const ValueFunction& u, const BField& b,
                         const FlowConfig& cfg = {});

struct UniquenessReport {
  bool applicable = false;
  double s = 0.0;
  int converged = 0;
  double sup_distance_all = 0.0;      // every converged restart vs ext on [s,T]
  double sup_distance_optimal = 0.0;  // restarts attaining the least cost
  std::optional<double> gradient_gap; // sup |D_B u + a| on (s,T)
  std::vector<double> restart_costs;
};

// s is snapped to the nearest sample of ext; restarts reuse its step size.
UniquenessReport uniqueness_probe(const ExtremalPath& ext, double s, const Field& f, const Field& g,
                                  const BField& b, const ShootingConfig& cfg = {},
                                  const ValueFunction* u = nullptr);

struct ConcatenationReport {
  double s = 0.0;
  double total = 0.0;
  double running = 0.0;
  double tail_value = 0.0;
  double residual = 0.0;
};

ConcatenationReport concatenation_check(const ExtremalPath& ext, double s, const Field& f, const Field& g,
                                        const BField& b, const ShootingConfig& cfg = {});

// max |p(s_i) - (p(T) - int_{s_i}^T p' ds)| over samples an even number of
// steps before T, quadrature by Simpson.
double adjoint_integral_defect(const ExtremalPath& ext, const Field& f, const BField& b);

// max over interior samples of the central-difference residual of the true
// state and adjoint equations.
double pontryagin_residual(const ExtremalPath& ext, const Field& f, const BField& b);

// max |a - p B(x)| over samples.
double control_identity_defect(const ExtremalPath& ext, const BField& b);

}  // namespace ncmfg
