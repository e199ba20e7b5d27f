#pragma once

#include <stdexcept>
#include <string>

namespace milattn {

// Error hierarchy aligned with the CLI exit codes:
//   UsageError -> 1, DataError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Typed file-format failures so callers can tell a wrong file from a damaged
// one without string matching.
class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// Shape contract violations inside the compute graph.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace milattn
