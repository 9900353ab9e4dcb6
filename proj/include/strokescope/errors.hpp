#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace strokescope {

// Base of every engine error. `code()` is the machine-readable tag the
// service puts in error responses.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

class ParseError : public Error {
public:
  ParseError(const std::string& message, std::size_t byte_offset);
  std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& message)
      : Error("validation_error", message) {}
};

class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& message)
      : Error("dimension_mismatch", message) {}
};

class ScorerError : public Error {
public:
  explicit ScorerError(const std::string& message)
      : Error("scorer_error", message) {}
};

class NoCandidateError : public Error {
public:
  explicit NoCandidateError(const std::string& message)
      : Error("no_candidate", message) {}
};

class BudgetError : public Error {
public:
  explicit BudgetError(const std::string& message)
      : Error("budget_error", message) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& message) : Error("io_error", message) {}
};

} // namespace strokescope
