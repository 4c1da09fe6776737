#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selfreflect {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Names the offending RunConfig field.
struct ConfigError : Error {
  explicit ConfigError(std::string f)
      : Error("invalid config field: " + f), field(std::move(f)) {}
  std::string field;
};

struct BackendError : Error {
  using Error::Error;
};
struct TruncationError : BackendError {
  using BackendError::BackendError;
};
struct LogprobUnsupportedError : BackendError {
  using BackendError::BackendError;
};

struct DegenerateDistributionError : Error {
  using Error::Error;
};
struct TemplateError : Error {
  using Error::Error;
};
struct EmptyTaskSetError : Error {
  using Error::Error;
};
struct JudgeParseError : Error {
  using Error::Error;
};
struct ProbabilityMassError : Error {
  using Error::Error;
};
struct InfeasibleError : Error {
  using Error::Error;
};
struct DimensionMismatchError : Error {
  using Error::Error;
};
struct MarkerMissingError : Error {
  using Error::Error;
};
struct EmptyCompletionError : Error {
  using Error::Error;
};
struct LengthMismatchError : Error {
  using Error::Error;
};
struct DegenerateError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(std::size_t line_no, const std::string& what)
      : Error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
  std::size_t line;
};

}  // namespace selfreflect
