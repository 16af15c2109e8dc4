#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcpauth/dependency.hpp"

namespace mcpauth {

enum class ResourceCategory { SystemExecution, PersistentData, NetworkCommunication, PhysicalInterface };

const char* to_string(ResourceCategory category);
ResourceCategory resource_category_from_string(std::string_view text);
/// Subcategories allowed under each top-level resource category.
const std::vector<std::string>& subcategories(ResourceCategory category);

struct ApiPattern {
  std::string pattern;
  ResourceCategory category = ResourceCategory::SystemExecution;
  std::string subcategory;
};

/// Line-oriented table of sensitive API patterns.
class SensitiveApiTable {
 public:
  /// Parses `pattern<TAB>category<TAB>subcategory` lines; '#' starts a comment.
  /// Throws ConfigError on malformed rows or unknown categories.
  static SensitiveApiTable parse(std::string_view text);
  static SensitiveApiTable load(const std::string& path);
  /// The table shipped with the library.
  static const SensitiveApiTable& builtin();

  /// Longest matching pattern for a fully expanded dotted name.
  const ApiPattern* match(std::string_view name) const;
  const std::vector<ApiPattern>& patterns() const { return patterns_; }
  /// SHA-256 of the table source text.
  const std::string& hash() const { return hash_; }

 private:
  std::vector<ApiPattern> patterns_;
  std::string hash_;
};

/// Glob match with dot-boundary suffix semantics.
bool api_pattern_matches(std::string_view pattern, std::string_view name);

struct SensitiveOperation {
  ResourceCategory category = ResourceCategory::SystemExecution;
  std::string subcategory;
  std::string matched_api;   // callee text as written at `location`
  std::string resolved_api;  // after alias expansion and receiver typing
  std::string pattern;       // table row that matched
  SourceLocation location;
  std::vector<std::string> via_path;  // handler ... enclosing function
  bool input_dependent = false;

  std::string function() const { return via_path.empty() ? std::string() : via_path.back(); }
};

std::vector<SensitiveOperation> identify_sensitive_operations(const ToolContext& context,
                                                              const CallGraph& graph,
                                                              const CallResolver& resolver,
                                                              const SensitiveApiTable& table);
std::vector<SensitiveOperation> identify_sensitive_operations(const ToolContext& context,
                                                              const CallGraph& graph,
                                                              const ProgramModel& model);

/// Shortest call chain from `from` to `to` using only `allowed` nodes.
std::vector<std::string> shortest_call_path(const std::string& from, const std::string& to,
                                            const CallGraph& graph,
                                            const std::set<std::string>& allowed);

}  // namespace mcpauth
