#pragma once

#include <string_view>

namespace mcpauth::data {

std::string_view sensitive_api_table();
std::string_view identity_lexicon();
std::string_view auth_failure_markers();

}  // namespace mcpauth::data
