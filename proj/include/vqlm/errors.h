// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <stdexcept>
#include <string>

namespace vqlm {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration value (dimensions, unknown keys, incompatible shapes
// chosen at setup time).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Malformed runtime input (empty clip, out-of-range token id, wrong patch
// count, sequence too long).
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error("input error: " + msg) {}
};

// Non-finite values encountered during numeric computation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

// Filesystem / subprocess failures, always carrying the offending path.
class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

}  // namespace vqlm
