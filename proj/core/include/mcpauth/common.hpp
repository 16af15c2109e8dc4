#pragma once

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcpauth {

inline constexpr const char* kToolVersion = "0.1.0";

/// 1-based line and byte column inside a project-relative source file.
struct SourceLocation {
  std::string file;
  int line = 0;
  int column = 0;

  auto operator<=>(const SourceLocation&) const = default;
  bool operator==(const SourceLocation&) const = default;

  std::string str() const {
    return file + ":" + std::to_string(line) + ":" + std::to_string(column);
  }
};

enum class DiagnosticKind {
  SkippedFile,
  Ambiguity,
  Incompleteness,
  DuplicateRegistration,
  UnresolvedHandler,
  UnknownHandler,
  DepthLimit,
  PathLimit,
  UnknownProject,
  DynamicValidation,
};

const char* to_string(DiagnosticKind kind);

struct Diagnostic {
  DiagnosticKind kind;
  std::string message;
  std::optional<SourceLocation> location;
};

using Diagnostics = std::vector<Diagnostic>;

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProjectNotFound : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class UnknownHandler : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class InconsistentInput : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

class ConfigError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

}  // namespace mcpauth
