#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sgn {

enum class ErrorKind {
  IndexOutOfBounds,
  DimensionMismatch,
  SingularMatrix,
  NotPositiveDefinite,
  NoConvergence,
  NegativeCurvature,
  SingularConstraintJacobian,
  NonSquareParamJacobian,
  CapabilityMissing,
  ForwardSimFailure,
  LineSearchFailure,
  MeritLineSearchFailure,
  InfeasiblePoint,
  NumericalBlowup,
  Config,
  Io,
};

const char* to_string(ErrorKind kind);
/// Scientific notation with three digits, for diagnostics.
std::string format_number(double v);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

class IndexOutOfBounds : public Error {
 public:
  IndexOutOfBounds(std::size_t entry, long row, long col, long rows, long cols);
  std::size_t entry;
  long row, col;
};

class SingularMatrix : public Error {
 public:
  explicit SingularMatrix(long pivot, const std::string& detail = {});
  long pivot;
};

class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(long pivot);
  long pivot;
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, double best_residual, int iterations);
  double best_residual;
  int iterations;
};

class NumericalBlowup : public Error {
 public:
  explicit NumericalBlowup(int step);
  int step;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::DimensionMismatch, what);
}

}  // namespace sgn
