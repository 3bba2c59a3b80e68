// Copyright 2026 The medrag Authors.
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
#include <vector>

namespace medrag {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Structurally valid input that violates a cross-record invariant.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A value outside the domain of a mathematical operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A key that a file-backed store does not contain.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Network failure, retry exhaustion or a remote error status.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, int status = 0)
      : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// A provider answered, but the payload breaks the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Efetch XML that could not be parsed; carries the batch it came from.
class XmlParseError : public Error {
 public:
  XmlParseError(const std::string& what, std::vector<std::string> pmids)
      : Error(what), pmids_(std::move(pmids)) {}
  const std::vector<std::string>& pmids() const noexcept { return pmids_; }

 private:
  std::vector<std::string> pmids_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage was asked to run before (or with stale) prerequisites.
class UpstreamError : public Error {
 public:
  using Error::Error;
};

}  // namespace medrag
