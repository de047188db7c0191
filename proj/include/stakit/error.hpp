#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stakit {

enum class ErrorCode {
  invalid_argument = 1,
  dimension_mismatch,
  parse,
  io,
  domain,
  not_found,
  undefined,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by every reader; line is 1-based, 0 when the whole document is at fault.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::string field,
             const std::string& message);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::size_t line_;
  std::string field_;
};

}  // namespace stakit
