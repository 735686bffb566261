// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace chvt {

/// Raised when a caller breaks an operation's precondition (shape mismatch,
/// empty input, nonpositive scale, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised by the training loop when a loss or gradient stops being finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::string last_good)
      : std::runtime_error(what), last_good_checkpoint(std::move(last_good)) {}
  std::string last_good_checkpoint;
};

/// Checkpoint or config written by an incompatible format version.
class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration key or value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace chvt
