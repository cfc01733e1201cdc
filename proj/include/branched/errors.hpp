#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace branched {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point lies outside the domain box, or an input is empty/degenerate.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Total masses of two measures (or a graph's divergence) do not balance.
class BalanceError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition on an argument is violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// alpha is at or below the 1 - 1/d threshold where dyadic bounds are vacuous.
class ThresholdError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Exact enumeration requested on an instance above the terminal cap.
class SizeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Malformed instance/plan/path file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A checked mathematical property failed on concrete data (for example a
/// lower bound exceeding an upper bound).
class PropertyError : public Error {
 public:
  using Error::Error;
};

/// Common base of the ConvergenceError instantiations.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

/// An iterative method hit its iteration cap without meeting the tolerance.
/// The payload type carries the best iterate found.
template <typename Payload>
class ConvergenceError : public ConvergenceFailure {
 public:
  ConvergenceError(const std::string& what, Payload best, double residual)
      : ConvergenceFailure(what), best_(std::move(best)), residual_(residual) {}
  const Payload& best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }

 private:
  Payload best_;
  double residual_;
};

/// Infinite energy. Absorbing under addition and compares above every finite
/// value, so reports can carry it through unchanged.
inline constexpr double kInfiniteEnergy = std::numeric_limits<double>::infinity();

inline bool is_infinite_energy(double e) noexcept { return e == kInfiniteEnergy; }

}  // namespace branched
