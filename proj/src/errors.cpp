#include "sgn/errors.hpp"

#include <sstream>

namespace sgn {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IndexOutOfBounds: return "IndexOutOfBounds";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NegativeCurvature: return "NegativeCurvature";
    case ErrorKind::SingularConstraintJacobian: return "SingularConstraintJacobian";
    case ErrorKind::NonSquareParamJacobian: return "NonSquareParamJacobian";
    case ErrorKind::CapabilityMissing: return "CapabilityMissing";
    case ErrorKind::ForwardSimFailure: return "ForwardSimFailure";
    case ErrorKind::LineSearchFailure: return "LineSearchFailure";
    case ErrorKind::MeritLineSearchFailure: return "MeritLineSearchFailure";
    case ErrorKind::InfeasiblePoint: return "InfeasiblePoint";
    case ErrorKind::NumericalBlowup: return "NumericalBlowup";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

namespace {
std::string oob_message(std::size_t entry, long row, long col, long rows, long cols) {
  std::ostringstream s;
  s << "triplet #" << entry << " at (" << row << ", " << col << ") outside " << rows << "x"
    << cols;
  return s.str();
}
}  // namespace

std::string format_number(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

IndexOutOfBounds::IndexOutOfBounds(std::size_t entry, long row, long col, long rows, long cols)
    : Error(ErrorKind::IndexOutOfBounds, oob_message(entry, row, col, rows, cols)),
      entry(entry),
      row(row),
      col(col) {}

SingularMatrix::SingularMatrix(long pivot, const std::string& detail)
    : Error(ErrorKind::SingularMatrix,
            "zero pivot at index " + std::to_string(pivot) + (detail.empty() ? "" : " (" + detail + ")")),
      pivot(pivot) {}

NotPositiveDefinite::NotPositiveDefinite(long pivot)
    : Error(ErrorKind::NotPositiveDefinite, "non-positive pivot at index " + std::to_string(pivot)),
      pivot(pivot) {}

NoConvergence::NoConvergence(const std::string& what, double best_residual, int iterations)
    : Error(ErrorKind::NoConvergence, what + " (best residual " + format_number(best_residual) +
                                          " after " + std::to_string(iterations) + " iterations)"),
      best_residual(best_residual),
      iterations(iterations) {}

NumericalBlowup::NumericalBlowup(int step)
    : Error(ErrorKind::NumericalBlowup, "non-finite or exploding state at step " + std::to_string(step)),
      step(step) {}

}  // namespace sgn
