// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tfs {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor extents do not line up (matmul inner dims, broadcast, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range or duplicate indices passed to gather/scatter-style ops.
class IndexError : public Error {
 public:
  using Error::Error;
};

// A public operation produced (or was handed) a NaN/Inf value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (bad hyperparameter, unknown key, ...). Maps to
// exit code 1 at the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem / serialization failure. Maps to exit code 2 at the CLI.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfs
