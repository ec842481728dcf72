#pragma once

#include <stdexcept>

namespace crsos {

/// Enumeration or generator construction would exceed the configured
/// state-count cap.
struct ResourceLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A move was applied to a configuration it is not legal on; signals a
/// caller bug, not a data condition.
struct InvalidMoveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Adaptive integration failed (step-size underflow or exhausted budget).
struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A probability entry dropped below the negativity floor during
/// mean-field integration.
struct NegativityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration or malformed input file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace crsos
