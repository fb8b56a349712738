#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ncmfg {

// Base of every error raised by the library. kind() is a stable machine tag
// used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string kind = "config-invalid")
      : Error(std::move(kind), what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class OutOfDomainError : public Error {
 public:
  explicit OutOfDomainError(const std::string& what) : Error("out-of-domain", what) {}
};

class StencilError : public Error {
 public:
  explicit StencilError(const std::string& what) : Error("stencil", what) {}
};

class ExcursionError : public Error {
 public:
  ExcursionError(const std::string& what, double exit_time, long index = -1)
      : Error("excursion", what), exit_time_(exit_time), index_(index) {}
  double exit_time() const noexcept { return exit_time_; }
  // Particle index when raised from a batched transport, -1 otherwise.
  long index() const noexcept { return index_; }

 private:
  double exit_time_;
  long index_;
};

class NonconvergenceError : public Error {
 public:
  NonconvergenceError(const std::string& what, std::vector<double> defect_trace)
      : Error("shooting-nonconvergence", what), trace_(std::move(defect_trace)) {}
  const std::vector<double>& defect_trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

class CertificationError : public Error {
 public:
  explicit CertificationError(const std::string& what) : Error("certification", what) {}
};

class ExpressionError : public Error {
 public:
  explicit ExpressionError(const std::string& what) : Error("expression", what) {}
};

}  // namespace ncmfg
