/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace weissi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (bad shape, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A layer norm is zero where a strictly positive one is required.
class DegenerateLayerError : public Error {
 public:
  using Error::Error;
};

/// A scale shift whose factors do not multiply to one.
class ProductConstraintError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Shifting is only defined for positively homogeneous activations.
class NonHomogeneousError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A loss or parameter became NaN or infinite during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace weissi
