#pragma once

#include <stdexcept>
#include <string>

namespace cisi {

// Error categories map one-to-one onto CLI exit codes (config 2, data 3,
// numeric 4). Shape and contract violations are programming errors and are
// reported as config errors at the CLI boundary.

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cisi
