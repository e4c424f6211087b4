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

#include "damp/error.hpp"

namespace damp {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::InvalidState: return "invalid_state";
    case ErrorKind::Format: return "format";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Version: return "version";
    case ErrorKind::MissingClass: return "missing_class";
    case ErrorKind::Contamination: return "contamination";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::DegenerateFeature: return "degenerate_feature";
    case ErrorKind::Config: return "config";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Staleness: return "staleness";
    case ErrorKind::Io: return "io";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Staleness:
      return 2;
    case ErrorKind::Format:
    case ErrorKind::Consistency:
    case ErrorKind::Corruption:
    case ErrorKind::Version:
    case ErrorKind::MissingClass:
    case ErrorKind::Contamination:
    case ErrorKind::InsufficientData:
    case ErrorKind::Dependency:
    case ErrorKind::Io:
      return 3;
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidState:
    case ErrorKind::DegenerateFeature:
    case ErrorKind::Numeric:
      return 4;
  }
  return 4;
}

}  // namespace damp
