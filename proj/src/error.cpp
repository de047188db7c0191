#include "stakit/error.hpp"

namespace stakit {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
    case ErrorCode::domain: return "domain";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::undefined: return "undefined";
  }
  return "unknown";
}

namespace {

std::string describe(const std::string& file, std::size_t line,
                     const std::string& field, const std::string& message) {
  std::string out = file.empty() ? std::string("<input>") : file;
  if (line > 0) out += ":" + std::to_string(line);
  if (!field.empty()) out += ": field '" + field + "'";
  out += ": " + message;
  return out;
}

}  // namespace

ParseError::ParseError(std::string file, std::size_t line, std::string field,
                       const std::string& message)
    : Error(ErrorCode::parse, describe(file, line, field, message)),
      file_(std::move(file)),
      line_(line),
      field_(std::move(field)) {}

}  // namespace stakit
