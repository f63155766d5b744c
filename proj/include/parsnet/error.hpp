#pragma once

#include <stdexcept>
#include <string>

namespace parsnet {

// Bad input to an operation: non-finite features, out-of-range labels,
// violated shape preconditions.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/Inf.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Operation called on a model that has not seen any data yet.
class UninitializedError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Invalid user configuration (CLI flags, config files, CSV schema).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Snapshot could not be decoded.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace parsnet
