#pragma once

#include <stdexcept>

namespace hgrec {

// Dimension/shape mismatches between operands.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: calling an operation outside its stated preconditions.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration values or unknown config keys.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hgrec
