#pragma once

#include <stdexcept>
#include <string>

namespace goalinf {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

struct RankTooLarge : Error {
  using Error::Error;
};

/// An eigenvalue is too close to 1 for 1/(1-lambda) or ln(1-lambda)
/// to be meaningful.
struct DegenerateEigenvalue : Error {
  using Error::Error;
};

struct EmptyMask : Error {
  using Error::Error;
};

struct ConfigInvalid : Error {
  using Error::Error;
};

struct BetaOutOfRange : Error {
  using Error::Error;
};

struct DegenerateSample : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace goalinf
