#pragma once

#include <stdexcept>
#include <string>

namespace cneval {

/// Broad failure classes. The CLI maps each class to its own exit code.
enum class ErrorKind {
  kConfig,
  kData,
  kNetwork,
  kHealth,
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Malformed input records. Message names the field and, when known, the line.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class EmptyDatasetError : public Error {
 public:
  explicit EmptyDatasetError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class TemplateNotFoundError : public Error {
 public:
  explicit TemplateNotFoundError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

// A metric whose definition has no value on the given input (e.g. too few tokens).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class UndefinedStatisticError : public Error {
 public:
  explicit UndefinedStatisticError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what, int attempts = 1)
      : Error(ErrorKind::kNetwork, what), attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class DuplicateKeyError : public Error {
 public:
  explicit DuplicateKeyError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class HealthError : public Error {
 public:
  explicit HealthError(const std::string& what) : Error(ErrorKind::kHealth, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNetwork: return 4;
    case ErrorKind::kHealth: return 5;
    case ErrorKind::kInternal: return 1;
  }
  return 1;
}

}  // namespace cneval
