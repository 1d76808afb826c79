#pragma once

#include <stdexcept>
#include <string>

namespace isclab {

// Invalid or inconsistent configuration. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that cannot be parsed. Carries the 1-based line and column where
// parsing stopped when they are known (0 = unknown).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", column " +
                           std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_ = 0;
  std::size_t column_ = 0;
};

// Structurally valid input that violates a data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A countermeasure policy was asked to do something it cannot honor.
class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An object was used outside its legal lifecycle.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A documented precondition was broken by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// I/O failure; position is the byte offset reached when known.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::uint64_t position)
      : std::runtime_error(what + " (at byte " + std::to_string(position) + ")"),
        position_(position) {}
  explicit IoError(const std::string& what) : std::runtime_error(what) {}

  std::uint64_t position() const { return position_; }

 private:
  std::uint64_t position_ = 0;
};

// Wraps a failure with the pipeline stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(stage) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace isclab
