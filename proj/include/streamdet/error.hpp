// Copyright 2026 The streamdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace streamdet {

/// Category of a failure, reported in machine-readable form by the CLI.
enum class ErrorKind {
  kDomain,         // argument outside an operation's domain
  kConfig,         // invalid configuration
  kEmptyBox,       // a box operation produced zero area
  kCorruption,     // stored codes or state are inconsistent
  kParse,          // malformed file contents
  kIo,             // filesystem failure
  kPolicy,         // replacement policy misuse
  kPrecondition,   // caller broke a documented precondition
  kModelEmpty,     // prediction requested before any fit
  kSchedule,       // class schedule violation
  kNumeric,        // non-finite values
};

const char* to_string(ErrorKind kind);

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

}  // namespace streamdet
