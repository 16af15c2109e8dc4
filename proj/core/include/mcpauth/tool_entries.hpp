#pragma once

#include <string>
#include <vector>

#include "mcpauth/program_model.hpp"

namespace mcpauth {

enum class RegistrationPattern {
  DecoratorBased,
  AddToolApi,
  ToolObject,
  RouteOperationId,
  RuntimeEnumeration,
  RegisterApi,
  ToolHandlerSubclass,
};

const char* to_string(RegistrationPattern pattern);
RegistrationPattern registration_pattern_from_string(std::string_view text);

struct ToolEntry {
  std::string tool_name;
  std::string handler;  // qualified name of the handler FunctionDef
  RegistrationPattern registration_pattern = RegistrationPattern::DecoratorBased;
  SourceLocation location;  // registration site
  std::string description;

  auto operator<=>(const ToolEntry&) const = default;
  bool operator==(const ToolEntry&) const = default;
};

struct ToolExtraction {
  std::vector<ToolEntry> entries;  // ordered by (file, line)
  Diagnostics diagnostics;
};

ToolExtraction extract_tool_entries_with_diagnostics(const ProgramModel& model);
std::vector<ToolEntry> extract_tool_entries(const ProgramModel& model);

}  // namespace mcpauth
