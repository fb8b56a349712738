#pragma once

// Scenario configuration: INI text with sections [scenario] [bfield]
// [coupling] [domain] [grid] [m0] [solver] [mfg], dotted overrides
// "section.key=value", and the built-in scenario registry.

#include "ncmfg/bfield.hpp"
#include "ncmfg/control.hpp"
#include "ncmfg/coupling.hpp"
#include "ncmfg/hjb.hpp"
#include "ncmfg/measure.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ncmfg {

struct ScenarioConfig {
  std::string name = "custom";

  // [bfield] kind = identity | grushin | custom
  std::string bfield_kind = "identity";
  int dim = 2;
  std::string h = "1";                        // grushin
  std::vector<std::vector<std::string>> rows; // custom, rows[i] = h_i1..h_ii
  std::optional<double> c2_bound;

  // [coupling]
  std::string V = "0";
  std::string G = "0";
  double rho_width = 0.5;
  int rho_power = 4;
  double rho_g_width = 0.5;

  // [domain]
  Box box{make_vec({-1.0, -1.0}), make_vec({1.0, 1.0})};
  double padding = 1.0;
  double horizon = 1.0;

  // [grid]
  double dx = 1.0 / 32.0;
  double dt = 0.0;
  int lattice_points = 7;
  double control_tol = 0.0;

  // [m0]
  M0Spec m0;
  std::size_t particles = 4096;
  std::uint64_t seed = 7;

  // [solver]
  double bvp_tol = 1e-9;
  int n_starts = 9;
  double sanity_margin = 1e-8;
  int steps_per_unit = 256;
  double uniq_tol = 1e-4;
  int oracle_steps = 8;
  std::size_t frozen_particles = 64;

  // [mfg]
  double theta = 0.5;
  double fp_tol = 1e-3;
  int max_iter = 50;
  int snapshots = 17;
  std::size_t n_exact = 512;
  int flow_substeps = 2;

  Box grid_box() const { return box.padded(padding); }
  BField make_bfield() const;
  CouplingSpec make_coupling() const;
  HjbGridSpec grid_spec() const;
  ShootingConfig shooting_config() const;
  OracleConfig oracle_config() const;
  FlowConfig flow_config() const { return FlowConfig{flow_substeps}; }

  // Throws ConfigError on any inconsistency.
  void validate() const;
};

// Parses INI text; `[scenario] base = <builtin>` starts from a built-in.
// Overrides are applied before validation.
ScenarioConfig parse_scenario(const std::string& ini_text, const std::vector<std::string>& overrides = {});
// kind "config-not-found" when the file does not exist.
ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ScenarioConfig apply_overrides(const ScenarioConfig& base, const std::vector<std::string>& overrides);
std::string serialize_scenario(const ScenarioConfig& cfg);

std::vector<ScenarioConfig> builtin_scenarios();
// kind "config-not-found" for unknown names.
ScenarioConfig builtin_scenario(const std::string& name);

}  // namespace ncmfg
