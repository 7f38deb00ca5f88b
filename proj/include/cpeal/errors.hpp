// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cpeal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that violate a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file headers (magic, version).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Missing, truncated, or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid acquisition requests (bad indices, budget over pool size).
class SelectionError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration that cannot be run as specified.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpeal
