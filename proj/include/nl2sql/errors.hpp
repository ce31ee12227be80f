#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace nl2sql {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the index of the offending entry when known.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::optional<std::size_t> entry = std::nullopt)
      : Error(entry ? "entry " + std::to_string(*entry) + ": " + what : what), entry_(entry) {}

  std::optional<std::size_t> entry_index() const { return entry_; }

 private:
  std::optional<std::size_t> entry_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class OpenError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

class SanitizeError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

// An agent stage failed after its format re-ask.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace nl2sql
