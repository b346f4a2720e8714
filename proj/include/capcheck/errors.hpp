// Copyright (c) 2026, the capcheck authors. All rights reserved.
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

namespace capcheck {

/// Base class for all capcheck errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A precondition on an input was violated (empty text, bad arity, ...).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// A remote or pluggable backend could not serve the request.
class BackendUnavailableError : public Error {
 public:
  using Error::Error;
};

/// A scripted fixture has no entry for the requested key and defaults are off.
class FixtureMissError : public Error {
 public:
  using Error::Error;
};

/// Persisted data failed an integrity check (digest mismatch, truncation).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Retrieval was attempted against a knowledge base with no entries.
class EmptyStoreError : public Error {
 public:
  using Error::Error;
};

}  // namespace capcheck
