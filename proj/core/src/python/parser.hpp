#pragma once

#include <string>
#include <string_view>

#include "mcpauth/program_model.hpp"

namespace mcpauth::python {

/// Module name for a project-relative path ("pkg/__init__.py" -> "pkg").
std::string module_name_for(std::string_view relative_path);

/// Parses one file into `model`. Throws SyntaxError; `model` is only
/// modified on success.
void parse_python_file(const std::string& relative_path, const std::string& content,
                       ProgramModel& model);

}  // namespace mcpauth::python
