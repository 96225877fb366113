#pragma once

#include <stdexcept>
#include <string>

namespace protofuse {

// Error classes surfaced by the library. The CLI maps each to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad dimensions, bad branch grammar, bad flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (mismatched cache, empty support...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (files, datasets, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// I/O failures.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace protofuse
