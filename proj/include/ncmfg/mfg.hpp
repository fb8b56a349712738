#pragma once

// Damped Picard iteration for the coupled system, solution verification and
// the stability harness.

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/coupling.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/measure.hpp"
#include "ncmfg/scenario.hpp"

#include <optional>
#include <vector>

namespace ncmfg {

struct MFGSolution {
  ValueFunction u;
  ParticleMeasure m0;
  std::vector<ParticleMeasure> curve;      // m at every value-function layer
  std::vector<int> snapshot_layers;        // report subset of curve
  std::vector<double> residual_history;    // sup over snapshots of d1(m^{k+1}, m^k)
  int iterations = 0;
  bool converged = false;

  std::vector<ParticleMeasure> snapshots() const;
};

// Evenly spread layer indices including 0 and steps.
std::vector<int> snapshot_layers(int steps, int count);

MFGSolution picard_solve(const ScenarioConfig& scenario);

// f = F(., ., m) and g = G(., m(T)) frozen at the solution's curve, with the
// density tabulated on the value-function grid.
FieldPtr solution_running_cost(const MFGSolution& sol, const ScenarioConfig& scenario);
FieldPtr solution_terminal_cost(const MFGSolution& sol, const ScenarioConfig& scenario);

struct HjResidual {
  double sup = 0.0;
  double mean = 0.0;
  long nodes = 0;
  long kinks_skipped = 0;
  bool terminal_layer_evaluated = false;
};

// -u_t + 1/2|D_B u|^2 - f at inner-box nodes of interior layers, central in
// time and space, skipping kink nodes.
HjResidual hj_residual(const ValueFunction& u, const Field& f, const BField& b);

struct VerifyReport {
  HjResidual hj;
  WeakFormReport weak;
  RegularityReport regularity;
  LipschitzReport lipschitz;
  double terminal_consistency = 0.0;  // max |u(., T) - G(., m(T))| at nodes
  double mass_defect = 0.0;           // |1 - N * weight| over the curve
  std::vector<UniquenessReport> uniqueness;
  double scheme_tol = 0.0;            // 5 (dt + dx)
  double weak_tol = 0.0;              // 5 (dt + dx + N^{-1/2})
  bool ok = false;
};

VerifyReport verify_solution(const MFGSolution& sol, const ScenarioConfig& scenario, int probes = 2);

struct StabilityReport {
  std::vector<double> gaps;
  std::vector<double> u_gaps;     // sup over inner-box nodes and layers
  std::vector<double> flow_gaps;  // sup over snapshots of d1
  bool u_decreasing = false;
  bool flow_decreasing = false;
};

// The measure curve is m0 frozen in time; perturbation n translates it by
// gaps[n] along the first axis.
StabilityReport stability_harness(const ScenarioConfig& scenario, const std::vector<double>& gaps);

}  // namespace ncmfg
