#pragma once

#include <stdexcept>
#include <string>

namespace catsim {

enum class ErrorKind {
  InvalidDimension,
  TruncationTooSmall,
  DimensionMismatch,
  InvalidArgument,
  DegenerateKernel,
  NonConvergence,
  Stiffness,
  UnresolvableJumps,
  NotBimodal,
  TooFewDwells,
  DegenerateFit,
  NotASaddle,
  Io,
};

const char* to_string(ErrorKind k);

// Validation errors are caller mistakes; everything else is a solver failure.
inline bool is_validation(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidDimension:
    case ErrorKind::TruncationTooSmall:
    case ErrorKind::DimensionMismatch:
    case ErrorKind::InvalidArgument:
    case ErrorKind::UnresolvableJumps:
    case ErrorKind::Io:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class DegenerateKernelError : public Error {
 public:
  DegenerateKernelError(int multiplicity, const std::string& what)
      : Error(ErrorKind::DegenerateKernel, what), multiplicity_(multiplicity) {}
  int multiplicity() const { return multiplicity_; }

 private:
  int multiplicity_;
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::TruncationTooSmall: return "truncation-too-small";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::DegenerateKernel: return "degenerate-kernel";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::Stiffness: return "stiffness";
    case ErrorKind::UnresolvableJumps: return "unresolvable-jumps";
    case ErrorKind::NotBimodal: return "not-bimodal";
    case ErrorKind::TooFewDwells: return "too-few-dwells";
    case ErrorKind::DegenerateFit: return "degenerate-fit";
    case ErrorKind::NotASaddle: return "not-a-saddle";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

}  // namespace catsim
