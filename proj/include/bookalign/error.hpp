#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bookalign {

/// Bad or malformed input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the text/subtitle parsers; carries the byte offset, cue index or line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t location)
      : DataError(what), location_(location) {}
  std::size_t location() const { return location_; }

 private:
  std::size_t location_;
};

/// Non-finite values, divergence (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bookalign
