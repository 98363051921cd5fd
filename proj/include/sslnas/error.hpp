// Copyright 2026 The sslnas Authors.
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

#ifndef SSLNAS_ERROR_HPP_
#define SSLNAS_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace sslnas {

// Base of every error thrown by the library. The category is used by the
// CLI to pick an exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { Domain, Structural, Numeric, Parse, Integrity, Config, Io, Data };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(Category::Domain, what) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what) : Error(Category::Structural, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Category::Numeric, what) {}
};

// Carries the JSON pointer of the offending field (or "" when the document
// is not even syntactically valid) and the byte offset when known.
class ParseError : public Error {
 public:
  ParseError(std::string field, long position, const std::string& what)
      : Error(Category::Parse, what), field_(std::move(field)), position_(position) {}

  const std::string& field() const noexcept { return field_; }
  long position() const noexcept { return position_; }

 private:
  std::string field_;
  long position_;
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what) : Error(Category::Integrity, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Category::Config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Category::Io, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::Data, what) {}
};

}  // namespace sslnas

#endif  // SSLNAS_ERROR_HPP_
