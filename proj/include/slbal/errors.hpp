#pragma once

#include <stdexcept>
#include <string>

namespace slbal {

/// Argument outside an operation's domain (non-finite input, bad rate, dimension mismatch).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine lost a required property (e.g. covariance no longer PSD).
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation called in an order the object does not support yet.
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// The mass/geometry model cannot support the requested computation.
struct DegenerateModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace slbal
