#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cyclecount {

// Base for every error raised by the library. Callers that only care about
// "something in the pipeline failed" catch this.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Required column absent from a delimited input header.
class SchemaError : public Error {
public:
  explicit SchemaError(std::string column)
      : Error("missing required column: " + column), column_(std::move(column)) {}
  const std::string& column() const noexcept { return column_; }

private:
  std::string column_;
};

// Invalid argument or precondition violation in a numerical routine.
class DomainError : public Error {
public:
  using Error::Error;
};

class RankDeficientError : public Error {
public:
  RankDeficientError(std::string msg, std::vector<std::string> columns)
      : Error(std::move(msg)), columns_(std::move(columns)) {}
  const std::vector<std::string>& dependent_columns() const noexcept { return columns_; }

private:
  std::vector<std::string> columns_;
};

class IoError : public Error {
public:
  using Error::Error;
};

// Raised by the pipeline; wraps the failing stage name.
class StageError : public Error {
public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

}  // namespace cyclecount
