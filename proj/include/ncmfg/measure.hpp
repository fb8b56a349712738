#pragma once

// Equal-weight particle measures, their transport by the feedback flow,
// density views and the Kantorovich-Rubinstein distance.

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/grid.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ncmfg {

// rho(y) = c (1 - |y|^2/w^2)^k on |y| < w, normalized to unit mass.
class BumpKernel {
 public:
  BumpKernel(double width, int dim, int power = 4);
  double width() const { return width_; }
  int dim() const { return dim_; }
  int power() const { return power_; }
  double peak() const { return c_; }
  double value(const Vec& y) const;
  Vec gradient(const Vec& y) const;
  // sup of |rho|, |D rho|, |D^2 rho| (Frobenius), each exact for the profile.
  double lipschitz() const;
  double c2_norm() const;

 private:
  double width_;
  int dim_;
  int power_;
  double c_;
};

class ParticleMeasure {
 public:
  ParticleMeasure() = default;
  ParticleMeasure(std::vector<Vec> positions, double time_label, std::string provenance = {},
                  std::uint64_t seed = 0);

  const std::vector<Vec>& positions() const { return positions_; }
  const Vec& operator[](std::size_t i) const { return positions_[i]; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  int dim() const { return positions_.empty() ? 0 : static_cast<int>(positions_.front().size()); }
  double weight() const { return 1.0 / static_cast<double>(positions_.size()); }
  double time_label() const { return time_label_; }
  const std::string& provenance() const { return provenance_; }
  std::uint64_t seed() const { return seed_; }
  double second_moment() const { return second_moment_; }

  ParticleMeasure relabel(double time_label) const;
  ParticleMeasure translated(const Vec& shift) const;

  void write_csv(const std::filesystem::path& path) const;
  // JSON sidecar with time_label, seed, provenance and count.
  void write_sidecar(const std::filesystem::path& path) const;

 private:
  std::vector<Vec> positions_;
  double time_label_ = 0.0;
  std::string provenance_;
  std::uint64_t seed_ = 0;
  double second_moment_ = 0.0;
};

struct M0Component {
  enum class Kind { Uniform, TruncatedGaussian };
  Kind kind = Kind::Uniform;
  Box box;
  Vec mean;   // truncated Gaussian only
  Vec sigma;  // per axis, truncated Gaussian only
  double weight = 1.0;
};

struct M0Spec {
  std::vector<M0Component> components;
};

// Deterministic in (spec, n, seed). Mixture components are drawn by weight;
// truncated Gaussians by per-axis inverse CDF inside the box.
ParticleMeasure sample_initial(const M0Spec& spec, std::size_t n, std::uint64_t seed);

// Transports every particle by the feedback flow of u from its time label to
// t_target. Excursions carry the lowest offending particle index.
ParticleMeasure push_forward(const ParticleMeasure& m, const ValueFunction& u, const BField& b, double t_target,
                             const FlowConfig& cfg = {});

// The curve t_k -> m(t_k) for increasing times starting at m's label.
std::vector<ParticleMeasure> push_forward_curve(const ParticleMeasure& m, const ValueFunction& u, const BField& b,
                                                const std::vector<double>& times, const FlowConfig& cfg = {});

struct DensityGrid {
  BoxGrid grid;
  std::vector<double> values;
  double total = 0.0;        // quadrature of values after renormalization
  double raw_total = 0.0;    // before renormalization
  bool undersmoothed = false;
  double sup() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Trapezoid-weighted quadrature of nodal values.
double grid_quadrature(const BoxGrid& grid, const std::vector<double>& values);

// (rho * m) at every grid node, exact kernel sums over particles.
std::vector<double> kernel_sums(const ParticleMeasure& m, const BumpKernel& k, const BoxGrid& grid);

DensityGrid density_estimate(const ParticleMeasure& m, const BoxGrid& grid, double bandwidth);

struct D1Result {
  double value = 0.0;
  bool approximate = false;
  std::size_t used = 0;
};

// Exact assignment for equal clouds up to n_exact particles; beyond, or for
// unequal counts, the same stride subsample of both clouds.
D1Result d1_distance(const ParticleMeasure& mu, const ParticleMeasure& nu, std::size_t n_exact = 512);

// Exhaustive minimum over permutations; small clouds only.
double d1_bruteforce(const ParticleMeasure& mu, const ParticleMeasure& nu);

double integrate_against(const std::function<double(const Vec&)>& phi, const ParticleMeasure& m);

struct LipschitzReport {
  double ratio = 0.0;
  double bound = 0.0;
  bool ok = true;
};

// Max d1(m(t), m(s)) / |t - s| over consecutive snapshots and the end pair,
// against sqrt(d) * lipschitz_x(u) * max(1, sup |B B^T|).
LipschitzReport time_lipschitz_report(const std::vector<ParticleMeasure>& snapshots, const ValueFunction& u,
                                      const BField& b, double tol = 1e-3);

// phi(x) = (1 - |x - c|^2 / r^2)^4 inside the ball, zero outside.
struct TestBump {
  Vec center;
  double radius = 1.0;
  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
};

std::vector<TestBump> default_test_battery(const Box& box);

struct WeakFormReport {
  double sup = 0.0;
  double mean = 0.0;
  int evaluations = 0;
};

// |d/dt int phi dm + int D_B phi . D_B u dm| at interior snapshots, time
// derivative by central differences of the snapshot integrals.
WeakFormReport weak_form_residual(const std::vector<ParticleMeasure>& snapshots, const ValueFunction& u,
                                  const BField& b, const std::vector<TestBump>& tests);

}  // namespace ncmfg
