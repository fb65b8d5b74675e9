#pragma once

#include <stdexcept>
#include <string>

namespace ruleharvest {

// Error taxonomy mirrors the CLI exit-code contract:
//   UsageError -> 2, IoError -> 3, SchemaError -> 4, FitError -> 5.

// Invalid arguments, parameters out of range, unknown flags/keys.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures: missing files, unwritable paths.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data: bad cells, column mismatches, NaN/inf.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model fitting cannot proceed (e.g. single-class data under logistic loss).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ruleharvest
