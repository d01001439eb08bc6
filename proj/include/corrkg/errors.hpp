#pragma once

#include <stdexcept>
#include <string>

namespace corrkg {

/// Malformed or unusable input data (bad JSONL, empty source, id mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace corrkg
