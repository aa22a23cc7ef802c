#pragma once

#include <stdexcept>
#include <string>

namespace ripen {

// Error families. The CLI maps each family onto a process exit code.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or infeasible parameters (exit 2).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed, misaligned or missing input data (exit 3).
struct DataError : Error {
  using Error::Error;
};

// Out-of-range trolley coordinates.
struct AddressError : DataError {
  using DataError::DataError;
};

// Violated interface contract: feature-set or catalogue mismatch.
struct ContractError : DataError {
  using DataError::DataError;
};

// Replay source ran dry before the scan plan finished.
struct TruncationError : DataError {
  using DataError::DataError;
};

// Value outside the domain of a mathematical function.
struct DomainError : DataError {
  using DataError::DataError;
};

struct IoError : DataError {
  using DataError::DataError;
};

// Solver failure such as SMO non-convergence (exit 4).
struct NumericalError : Error {
  using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace ripen
