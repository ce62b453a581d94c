#pragma once

#include <stdexcept>
#include <string>

namespace emdscan {

// Malformed input record. Carries the 1-based line number of the offending record.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientExtrema : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file an operation depends on does not exist yet.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(const std::string& path, const std::string& hint = {})
      : std::runtime_error("missing artifact: " + path + (hint.empty() ? "" : " (" + hint + ")")), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace emdscan
