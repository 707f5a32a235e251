// Copyright 2026 The ionreadout Authors
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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ionreadout {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration values or unknown/missing config keys.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the byte offset (binary) or line number (text) of the problem.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::uint64_t offset, const char* unit = "byte offset")
        : Error(what + " (at " + unit + " " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Not enough data for a statistical estimate (empty histogram, no peak region, ...).
class StatisticsError : public Error {
public:
    using Error::Error;
};

/// File system failures (open, write, rename).
class IoError : public Error {
public:
    using Error::Error;
};

/// Arguments outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

} // namespace ionreadout
