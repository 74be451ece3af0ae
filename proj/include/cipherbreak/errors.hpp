#pragma once

#include <stdexcept>
#include <string>

namespace cipherbreak {

// Error taxonomy shared by every module. The CLI maps these onto exit codes:
// ArgumentError -> 1, DataError/DimensionError/StructuralError -> 2,
// NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class StructuralError : public Error {
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

}  // namespace cipherbreak
