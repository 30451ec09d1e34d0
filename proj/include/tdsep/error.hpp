// Copyright 2026 The tdsep Authors
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

namespace tdsep {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions disagree (lengths, channels, sample rates).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A signal that must carry energy does not (e.g. an all-zero interferer).
class DegenerateSignalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or precondition on user-supplied settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / format problems while reading or writing artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail
}  // namespace tdsep
