#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qslgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration; `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A drift or state became non-finite. `iteration` is -1 when the failing
/// step was called outside a driver loop.
class NumericalBlowUp : public Error {
 public:
  explicit NumericalBlowUp(std::int64_t iteration = -1)
      : Error(iteration < 0 ? std::string("numerical blow-up")
                            : "numerical blow-up at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  std::int64_t iteration() const noexcept { return iteration_; }

 private:
  std::int64_t iteration_;
};

class DegenerateProjection : public Error {
 public:
  DegenerateProjection() : Error("degenerate projection") {}
};

class NoConvergence : public Error {
 public:
  NoConvergence(double residual, std::int64_t iterations)
      : Error("no convergence after " + std::to_string(iterations) +
              " iterations (residual " + std::to_string(residual) + ")"),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  std::int64_t iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  std::int64_t iterations_;
};

class CflViolation : public Error {
 public:
  CflViolation(double dt, double limit)
      : Error("CFL violation: dt=" + std::to_string(dt) + " exceeds " + std::to_string(limit)),
        dt_(dt),
        limit_(limit) {}
  double dt() const noexcept { return dt_; }
  double limit() const noexcept { return limit_; }

 private:
  double dt_;
  double limit_;
};

/// The requested quantity is undefined for the given arguments.
class UndefinedBound : public Error {
 public:
  explicit UndefinedBound(const std::string& why) : Error("bound undefined: " + why) {}
};

}  // namespace qslgd
