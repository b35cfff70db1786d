// Copyright 2026 The qvn Authors
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qvn {

/// Base of every error raised by the library. `code()` is a stable
/// machine-readable tag used by the CLI as the prefix of its error line.
class Error : public std::runtime_error {
   public:
    Error(std::string code, const std::string &what) : std::runtime_error(what), code_(std::move(code)) {
    }
    const std::string &code() const noexcept {
        return code_;
    }

   private:
    std::string code_;
};

#define QVN_DEFINE_ERROR(Name, Code)                                   \
    class Name : public Error {                                        \
       public:                                                         \
        explicit Name(const std::string &what) : Error(Code, what) { \
        }                                                              \
    };

QVN_DEFINE_ERROR(ArgumentError, "E_ARGUMENT")
QVN_DEFINE_ERROR(DimensionError, "E_DIMENSION")
QVN_DEFINE_ERROR(ValidationError, "E_VALIDATION")
QVN_DEFINE_ERROR(NumericalError, "E_NUMERICAL")
QVN_DEFINE_ERROR(NotCptpError, "E_NOT_CPTP")
QVN_DEFINE_ERROR(ConfigurationError, "E_CONFIGURATION")
QVN_DEFINE_ERROR(NotFoundError, "E_NOT_FOUND")
QVN_DEFINE_ERROR(OutOfCopiesError, "E_OUT_OF_COPIES")
QVN_DEFINE_ERROR(NotRestorableError, "E_NOT_RESTORABLE")
QVN_DEFINE_ERROR(EstimationError, "E_ESTIMATION")
QVN_DEFINE_ERROR(PreconditionError, "E_PRECONDITION")

#undef QVN_DEFINE_ERROR

/// Malformed text input. Line and column are 1-based; column 0 means the
/// whole line.
class ParseError : public Error {
   public:
    ParseError(std::size_t line, std::size_t column, const std::string &what)
        : Error("E_PARSE", "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line),
          column_(column) {
    }
    std::size_t line() const noexcept {
        return line_;
    }
    std::size_t column() const noexcept {
        return column_;
    }

   private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace qvn
