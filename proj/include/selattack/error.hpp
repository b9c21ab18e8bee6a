// Copyright 2026 The selattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace selattack {

inline constexpr const char* kVersion = "0.3.1";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON line, bad CSV row).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Base for every failure that comes back from a model endpoint or mock.
class OracleError : public Error {
 public:
  using Error::Error;
};

// Connection refused, timeouts, 5xx. Retried by the HTTP clients.
class TransportError : public OracleError {
 public:
  using OracleError::OracleError;
};

// The endpoint answered but the answer cannot be scored (no logprobs, letter
// token missing from top-k). Never retried and never mapped to INVALID.
class ScoringError : public OracleError {
 public:
  using OracleError::OracleError;
};

}  // namespace selattack
