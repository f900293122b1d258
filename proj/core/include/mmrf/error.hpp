// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mmrf {

/// Base of every error the library raises. `exit_code()` is what the CLI
/// returns when the error escapes a command.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 4; }
};

/// Invalid configuration or a violated cross-field constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Malformed or inconsistent input data (logs, checkpoints, datasets).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class SessionError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmrf
