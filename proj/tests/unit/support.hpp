#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "mcpauth/report.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(MCPAUTH_FIXTURE_DIR) / rel;
}

inline mcpauth::ProgramModel model_of(const std::map<std::string, std::string>& files) {
  return mcpauth::parse_sources(files, "memory");
}

inline const mcpauth::ToolReport* tool_named(const mcpauth::ProjectReport& r, const std::string& name) {
  for (const auto& t : r.tool_reports) {
    if (t.tool.tool_name == name) return &t;
  }
  return nullptr;
}

inline mcpauth::ProjectReport analyze_fixture(const std::string& rel) {
  mcpauth::AnalysisOptions o;
  o.deterministic = true;
  return mcpauth::analyze_project(fixture(rel), o);
}

using Files = std::map<std::string, std::string>;

/// Everything the pipeline computes for one tool of an in-memory project.
struct Pipeline {
  mcpauth::ProgramModel model;
  mcpauth::CallGraph graph;
  std::vector<mcpauth::ToolEntry> tools;

  explicit Pipeline(const std::map<std::string, std::string>& files)
      : model(model_of(files)), graph(mcpauth::build_call_graph(model)),
        tools(mcpauth::extract_tool_entries(model)) {}

  const mcpauth::ToolEntry& tool(const std::string& name) const {
    for (const auto& t : tools) {
      if (t.tool_name == name) return t;
    }
    throw std::runtime_error("no tool " + name);
  }
};

}  // namespace testing_support
