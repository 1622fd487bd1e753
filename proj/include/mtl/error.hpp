// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mtl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An index (token id, class label, row id) is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf would have been produced, or log/division of a non-positive value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input (e.g. empty token list).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtl
