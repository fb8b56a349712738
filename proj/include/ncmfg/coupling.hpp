#pragma once

// Nonlocal couplings F(x,t,m) = V(x,t,(rho*m)(x)) and G(x,m) = G(x,(rho_G*m)(x)).

#include "ncmfg/expr.hpp"
#include "ncmfg/field.hpp"
#include "ncmfg/grid.hpp"
#include "ncmfg/linalg.hpp"
#include "ncmfg/measure.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace ncmfg {

struct CouplingSpec {
  Expression V;  // slots x, t, z
  BumpKernel rho;
  Expression G;  // slots x, z
  BumpKernel rho_g;
  std::optional<double> c2_cert;

  bool running_depends_on_measure() const { return V.uses(kSlotZ); }
  bool terminal_depends_on_measure() const { return G.uses(kSlotZ); }
  bool depends_on_measure() const { return running_depends_on_measure() || terminal_depends_on_measure(); }
};

double mollified_density(const ParticleMeasure& m, const BumpKernel& rho, const Vec& x);
Vec mollified_density_gradient(const ParticleMeasure& m, const BumpKernel& rho, const Vec& x);

double eval_F(const CouplingSpec& spec, const Vec& x, double t, const ParticleMeasure& m);
double eval_G(const CouplingSpec& spec, const Vec& x, const ParticleMeasure& mT);

// expr(x, t, (rho * m(t))(x)) for a measure curve frozen at snapshot times;
// z is linear in t between snapshots and constant outside them. The x-gradient
// follows the chain rule with the analytic kernel gradient. Grid tabulation
// scatters particles onto nodes.
class CouplingField final : public Field {
 public:
  CouplingField(Expression expr, BumpKernel rho, std::vector<ParticleMeasure> curve);

  double value(const Vec& x, double t) const override;
  Vec gradient(const Vec& x, double t) const override;
  void tabulate(const BoxGrid& grid, double t, std::span<double> out) const override;

  // Replaces particle sums in value and gradient by interpolated node tables
  // on the grid at the snapshot times.
  void attach_grid(const BoxGrid& grid);

 private:
  void bracket(double t, std::size_t& k, double& w) const;
  double density(const Vec& x, double t) const;
  Vec density_gradient(const Vec& x, double t) const;

  Expression expr_;
  BumpKernel rho_;
  std::vector<ParticleMeasure> curve_;
  bool uses_z_;
  std::shared_ptr<const TabulatedField> table_;
  std::vector<double> table_times_;
};

FieldPtr running_cost_field(const CouplingSpec& spec, std::vector<ParticleMeasure> curve, int dim);
FieldPtr terminal_cost_field(const CouplingSpec& spec, const ParticleMeasure& mT, int dim);

struct C2Certificate {
  double F = 0.0;
  double G = 0.0;
  double bound = 0.0;
};

// Finite-difference scan of values, first and second differences of F and G
// over the box for every (t, m) sample, at spacing h and h/2. Growth beyond
// 2x under refinement raises CertificationError.
C2Certificate c2_certify(const CouplingSpec& spec, const Box& box, const std::vector<double>& t_samples,
                         const std::vector<ParticleMeasure>& m_samples, int points_per_axis = 17);

}  // namespace ncmfg
