// Copyright 2026 The frkmap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace frk {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// An argument violates its documented domain (tau <= 0, k < 2, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Basis construction kept no centers (no observation in reach of any candidate).
class EmptyBasis : public Error {
 public:
  using Error::Error;
};

/// The trend design is numerically rank deficient (cond(T^T T) too large).
class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix that must be positive definite is not.
class SingularCovariance : public Error {
 public:
  using Error::Error;
};

/// A factorization or iteration failed for numerical reasons.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (CSV rows, config files, model artifacts).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A scenario/run configuration is invalid (unknown key, missing field, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace frk
