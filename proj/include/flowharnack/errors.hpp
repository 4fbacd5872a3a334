#pragma once

#include <stdexcept>
#include <string>

namespace fh {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fields living on different grids were combined.
class ChartMismatch : public Error {
 public:
  ChartMismatch() : Error("fields do not share a chart") {}
};

// Any failure that stops a time integration. `time` is the flow time t.
class NumericalAbort : public Error {
 public:
  NumericalAbort(const std::string& what, double time)
      : Error(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class DegenerateMetric : public NumericalAbort {
 public:
  using NumericalAbort::NumericalAbort;
};

class PositivityLoss : public NumericalAbort {
 public:
  using NumericalAbort::NumericalAbort;
};

class CflViolation : public NumericalAbort {
 public:
  using NumericalAbort::NumericalAbort;
};

class NormalizationError : public Error {
 public:
  explicit NormalizationError(double mass)
      : Error("density not normalized, mass=" + std::to_string(mass)), mass_(mass) {}
  double mass() const { return mass_; }

 private:
  double mass_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best, double residual)
      : Error(what), best_(best), residual_(residual) {}
  double best() const { return best_; }
  double residual() const { return residual_; }

 private:
  double best_;
  double residual_;
};

class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace fh
