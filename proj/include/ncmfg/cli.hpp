#pragma once

// Batch front end: subcommands scenarios, solve-hjb, solve-mfg, trajectory,
// pushforward and validate.
//
// Exit codes: 0 success, 2 configuration or input error, 3 fixed-point
// nonconvergence, 4 shooting nonconvergence, 5 validation failure.

#include "ncmfg/scenario.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ncmfg {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitFixedPoint = 3,
  kExitShooting = 4,
  kExitValidation = 5,
};

struct ValidationCheck {
  std::string scenario;
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool pass = false;
};

struct ValidationOptions {
  bool adjoint_fault = false;  // flips the adjoint drift sign in shooting
  int shooting_points = 2;
};

// Runs the invariant battery on one scenario. Per-scenario CSVs go to
// out_dir when it is not empty; the written paths are appended to outputs.
std::vector<ValidationCheck> validation_battery(const ScenarioConfig& scenario, const ValidationOptions& opts,
                                                const std::filesystem::path& out_dir = {},
                                                std::vector<std::filesystem::path>* outputs = nullptr);

int run_cli(int argc, char** argv);

}  // namespace ncmfg
