// Copyright 2026 The halfkern Authors.
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

#ifndef HALFKERN_ERRORS_HPP_
#define HALFKERN_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace halfkern {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or an unsupported combination of options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed textual or binary input.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A structural invariant of a graph or schedule does not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// A computation produced values it must not (NaN loss, range violation).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace halfkern

#endif  // HALFKERN_ERRORS_HPP_
