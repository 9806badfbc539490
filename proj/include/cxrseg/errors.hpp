// Copyright 2026 The cxrseg Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cxrseg {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or mask shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (model depth, thresholds, fold counts...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse: non-scalar loss, missing gradient, empty dataset.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `offset` is the byte position where parsing failed
/// (or the 1-based line number for line-oriented formats).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at " + std::to_string(offset) + ")"), message_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  /// The description without the position suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  std::size_t offset_;
};

/// Workflow transition that the state graph does not allow.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what, std::vector<std::string> ids = {})
      : Error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

/// Unknown item / job / record id.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Prediction and ground-truth sets that are not aligned by id.
class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::vector<std::string> ids)
      : Error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

}  // namespace cxrseg
