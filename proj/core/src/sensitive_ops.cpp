#include "mcpauth/sensitive_ops.hpp"

#include <algorithm>
#include <deque>

#include "embedded_data.hpp"
#include "util.hpp"

namespace mcpauth {

const char* to_string(ResourceCategory category) {
  switch (category) {
    case ResourceCategory::SystemExecution: return "SystemExecution";
    case ResourceCategory::PersistentData: return "PersistentData";
    case ResourceCategory::NetworkCommunication: return "NetworkCommunication";
    case ResourceCategory::PhysicalInterface: return "PhysicalInterface";
  }
  return "SystemExecution";
}

ResourceCategory resource_category_from_string(std::string_view text) {
  for (auto c : {ResourceCategory::SystemExecution, ResourceCategory::PersistentData,
                 ResourceCategory::NetworkCommunication, ResourceCategory::PhysicalInterface}) {
    if (text == to_string(c)) return c;
  }
  throw ConfigError("unknown resource category: " + std::string(text));
}

const std::vector<std::string>& subcategories(ResourceCategory category) {
  static const std::vector<std::string> system = {
      "System Execution",    "Process Management",          "Privileged Operations",
      "Environment Control", "Inter-Process Communication", "Scheduling and Background Tasks"};
  static const std::vector<std::string> persistent = {
      "File Read / Write", "Configuration Files", "Source Code and Binaries",
      "Logs and Persistent State", "Removable and Mounted Storage"};
  static const std::vector<std::string> network = {
      "Network Communication", "Authenticated Sessions", "Remote Service Interaction",
      "Data Transfer", "Local Network Interaction"};
  static const std::vector<std::string> physical = {
      "Device and Interface Interaction", "Audio Capture", "Camera and Video",
      "Display and Screen", "Input Simulation", "Connectivity Interfaces"};
  switch (category) {
    case ResourceCategory::SystemExecution: return system;
    case ResourceCategory::PersistentData: return persistent;
    case ResourceCategory::NetworkCommunication: return network;
    case ResourceCategory::PhysicalInterface: return physical;
  }
  return system;
}

namespace {

bool glob(std::string_view p, std::string_view s) {
  std::size_t pi = 0, si = 0, star = std::string_view::npos, mark = 0;
  while (si < s.size()) {
    if (pi < p.size() && p[pi] == '*') {
      star = pi++;
      mark = si;
    } else if (pi < p.size() && p[pi] == s[si]) {
      ++pi;
      ++si;
    } else if (star != std::string_view::npos) {
      pi = star + 1;
      si = ++mark;
    } else {
      return false;
    }
  }
  while (pi < p.size() && p[pi] == '*') ++pi;
  return pi == p.size();
}

}  // namespace

bool api_pattern_matches(std::string_view pattern, std::string_view name) {
  if (glob(pattern, name)) return true;
  if (pattern.find('.') == std::string_view::npos) return false;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '.' && glob(pattern, name.substr(i + 1))) return true;
  }
  return false;
}

SensitiveApiTable SensitiveApiTable::parse(std::string_view text) {
  SensitiveApiTable table;
  table.hash_ = util::sha256_hex(text);
  int line_no = 0;
  for (const auto& raw : util::split(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (util::trim(line).empty()) continue;
    auto fields = util::split(line, '\t');
    if (fields.size() != 3) {
      throw ConfigError("sensitive API table line " + std::to_string(line_no) +
                        ": expected 3 tab-separated fields");
    }
    ApiPattern row;
    row.pattern = util::trim(fields[0]);
    row.category = resource_category_from_string(util::trim(fields[1]));
    row.subcategory = util::trim(fields[2]);
    const auto& allowed = subcategories(row.category);
    if (std::find(allowed.begin(), allowed.end(), row.subcategory) == allowed.end()) {
      throw ConfigError("sensitive API table line " + std::to_string(line_no) +
                        ": unknown subcategory '" + row.subcategory + "'");
    }
    if (row.pattern.empty()) {
      throw ConfigError("sensitive API table line " + std::to_string(line_no) + ": empty pattern");
    }
    table.patterns_.push_back(std::move(row));
  }
  return table;
}

SensitiveApiTable SensitiveApiTable::load(const std::string& path) {
  return parse(util::read_file(path));
}

const SensitiveApiTable& SensitiveApiTable::builtin() {
  static const SensitiveApiTable table = parse(data::sensitive_api_table());
  return table;
}

const ApiPattern* SensitiveApiTable::match(std::string_view name) const {
  const ApiPattern* best = nullptr;
  for (const auto& row : patterns_) {
    if (!api_pattern_matches(row.pattern, name)) continue;
    if (!best || row.pattern.size() > best->pattern.size()) best = &row;
  }
  return best;
}

std::vector<std::string> shortest_call_path(const std::string& from, const std::string& to,
                                            const CallGraph& graph,
                                            const std::set<std::string>& allowed) {
  if (from == to) return {from};
  // Walk reverse edges from the target back to the handler.
  std::map<std::string, std::string> next_hop;
  std::deque<std::string> queue{to};
  std::set<std::string> seen{to};
  while (!queue.empty()) {
    std::string node = queue.front();
    queue.pop_front();
    for (const auto& caller : graph.callers(node)) {
      if (!allowed.count(caller) || seen.count(caller)) continue;
      seen.insert(caller);
      next_hop[caller] = node;
      if (caller == from) {
        std::vector<std::string> path{from};
        while (path.back() != to) path.push_back(next_hop[path.back()]);
        return path;
      }
      queue.push_back(caller);
    }
  }
  return {};
}

namespace {

std::string refine_persistent(const ApiPattern& row, const FunctionDef* fn, const CallSite& site) {
  if (row.category != ResourceCategory::PersistentData || row.subcategory != "File Read / Write") {
    return row.subcategory;
  }
  std::vector<std::string> words;
  if (fn) words = util::identifier_words(fn->name);
  for (const auto& arg : site.arguments) {
    walk(arg, [&](const Expression& e) {
      if (e.is_string_literal()) {
        auto w = util::identifier_words(e.name);
        words.insert(words.end(), w.begin(), w.end());
      }
    });
  }
  auto any = [&](std::initializer_list<const char*> keys) {
    return std::any_of(words.begin(), words.end(), [&](const std::string& w) {
      return std::any_of(keys.begin(), keys.end(), [&](const char* k) { return w == k; });
    });
  };
  if (any({"log", "logs", "cache", "state", "history"})) return "Logs and Persistent State";
  if (any({"config", "settings", "conf", "ini", "toml", "yaml", "yml", "env"})) {
    return "Configuration Files";
  }
  return row.subcategory;
}

}  // namespace

std::vector<SensitiveOperation> identify_sensitive_operations(const ToolContext& context,
                                                              const CallGraph& graph,
                                                              const CallResolver& resolver,
                                                              const SensitiveApiTable& table) {
  std::vector<SensitiveOperation> out;
  for (const auto& name : context.related_functions) {
    const FunctionDef* fn = resolver.function(name);
    if (!fn) continue;
    std::vector<std::string> path;
    for (const auto& site : fn->call_sites) {
      if (!resolver.resolve(site).empty()) continue;
      const Expression& callee = site.call.children.front();
      std::vector<std::string> candidates{resolver.expand_imports(site.callee_expression, fn->file)};
      if (callee.kind == ExprKind::Attribute) {
        const Expression& recv = callee.children.front();
        if (recv.kind == ExprKind::Name || recv.kind == ExprKind::Attribute) {
          if (auto ctor = resolver.receiver_constructor(recv.text, fn, fn->file)) {
            candidates.insert(candidates.begin(), *ctor + "." + callee.name);
          }
        }
      }
      const ApiPattern* best = nullptr;
      std::string resolved;
      for (const auto& c : candidates) {
        const ApiPattern* row = table.match(c);
        if (row && (!best || row->pattern.size() > best->pattern.size())) {
          best = row;
          resolved = c;
        }
      }
      if (!best) continue;
      if (path.empty()) path = shortest_call_path(context.tool.handler, name, graph, context.related_functions);
      SensitiveOperation op;
      op.category = best->category;
      op.subcategory = refine_persistent(*best, fn, site);
      op.matched_api = callee.text;
      op.resolved_api = resolved;
      op.pattern = best->pattern;
      op.location = site.location;
      op.via_path = path;
      auto tree = context.call_trees.find(site.location.str());
      if (tree != context.call_trees.end()) {
        op.input_dependent = tree->second.origin == OriginFlag::InputDependent;
      } else {
        op.input_dependent = extract_call_tree(site, resolver, fn, &context.input_parameters).origin ==
                             OriginFlag::InputDependent;
      }
      out.push_back(std::move(op));
    }
  }
  std::sort(out.begin(), out.end(), [](const SensitiveOperation& a, const SensitiveOperation& b) {
    return std::tie(a.location, a.matched_api) < std::tie(b.location, b.matched_api);
  });
  return out;
}

std::vector<SensitiveOperation> identify_sensitive_operations(const ToolContext& context,
                                                              const CallGraph& graph,
                                                              const ProgramModel& model) {
  CallResolver resolver(model);
  return identify_sensitive_operations(context, graph, resolver, SensitiveApiTable::builtin());
}

}  // namespace mcpauth
