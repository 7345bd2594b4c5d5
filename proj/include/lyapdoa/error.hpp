#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lyapdoa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed dynamics source. position is a 0-based character offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error("parse error at offset " + std::to_string(position) + ": " + what), position_(position) {}
  [[nodiscard]] std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Raised when an expression cannot be evaluated at a given state (division by zero).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lyapdoa
