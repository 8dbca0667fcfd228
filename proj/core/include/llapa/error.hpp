#pragma once

#include <stdexcept>
#include <string>

namespace llapa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or width disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration (exit code 2 in the CLI).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class VocabularyError : public Error {
 public:
  VocabularyError(const std::string& what, std::string word) : Error(what), word_(std::move(word)) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing data files (exit code 3 in the CLI).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or an untrainable corpus (exit code 4 in the CLI).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace llapa
