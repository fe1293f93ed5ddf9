#pragma once

#include <stdexcept>
#include <string>

namespace nlogic {

// Error families map to process exit codes in the CLI:
//   ConfigError -> 1, DataError -> 2, NumericError and everything else -> 3.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : NumericError {
  using NumericError::NumericError;
};

struct DegenerateVectorError : NumericError {
  using NumericError::NumericError;
};

// Violated call contract (e.g. backward from a non-scalar root).
struct ContractError : NumericError {
  using NumericError::NumericError;
};

struct ParseError : DataError {
  size_t offset;
  ParseError(const std::string& msg, size_t off)
      : DataError(msg + " at offset " + std::to_string(off)), offset(off) {}
};

}  // namespace nlogic
