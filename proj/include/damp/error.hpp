// Copyright 2026 The damp Authors
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

namespace damp {

enum class ErrorKind {
  InvalidArgument,
  InvalidState,
  Format,
  Consistency,
  Corruption,
  Version,
  MissingClass,
  Contamination,
  InsufficientData,
  DegenerateFeature,
  Config,
  Dependency,
  Staleness,
  Io,
  Numeric,
};

const char* to_string(ErrorKind kind) noexcept;

/// Process exit status for a failure kind: 2 config, 3 data, 4 numeric or
/// invariant.
int exit_code(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the kinds above so the
/// C layer can map it onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace damp
