#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcpauth/program_model.hpp"
#include "mcpauth/tool_entries.hpp"

namespace mcpauth {

inline constexpr int kMaxCallDepth = 50;

struct CallEdge {
  std::string caller;
  std::string callee;
  SourceLocation location;  // call site in the caller
  bool callback = false;    // function reference passed as an argument

  auto operator<=>(const CallEdge&) const = default;
  bool operator==(const CallEdge&) const = default;
};

struct CallGraph {
  std::set<std::string> nodes;
  std::map<std::string, std::set<std::string>> forward_edges;
  std::map<std::string, std::set<std::string>> reverse_edges;
  std::vector<CallEdge> call_edges;  // one per resolved call site, sorted

  void add_node(const std::string& name);
  void add_edge(const std::string& caller, const std::string& callee);
  void add_edge(const CallEdge& edge);
  bool has_edge(const std::string& caller, const std::string& callee) const;
  const std::set<std::string>& callees(const std::string& name) const;
  const std::set<std::string>& callers(const std::string& name) const;
};

/// Resolves call sites to project functions by name, following nested and
/// same-file definitions, import aliases, `self` methods, locally typed
/// objects and statically visible dispatch dictionaries.
class CallResolver {
 public:
  explicit CallResolver(const ProgramModel& model);

  /// Candidate callees (qualified names) for a call site; empty if external.
  std::vector<std::string> resolve(const CallSite& site) const;
  /// Resolves a reference expression (Name/Attribute) used as a value.
  std::optional<std::string> resolve_reference(const Expression& expr,
                                               const std::string& enclosing_function,
                                               const std::string& file) const;
  /// Resolves a dotted name as written in `file` to a function or class.
  std::optional<std::string> resolve_name(const std::string& dotted, const std::string& file,
                                          const FunctionDef* scope) const;
  /// Full dotted path after import-alias expansion ("sp.run" -> "subprocess.run").
  std::string expand_imports(const std::string& dotted, const std::string& file) const;
  /// Local class constructor that `receiver` was assigned from, if visible.
  std::optional<std::string> receiver_class(const std::string& receiver, const FunctionDef* fn,
                                            const std::string& file) const;
  /// External constructor text a receiver was assigned from ("httpx.Client()").
  std::optional<std::string> receiver_constructor(const std::string& receiver,
                                                  const FunctionDef* fn,
                                                  const std::string& file) const;
  const ProgramModel& model() const { return model_; }
  const FunctionDef* function(const std::string& qualified_name) const;
  /// Method lookup through locally defined bases.
  std::optional<std::string> find_method(const std::string& class_qname,
                                         const std::string& method) const;
  std::vector<std::string> base_classes(const ClassDef& cls) const;
  bool is_import_alias(const std::string& name, const std::string& file) const;

 private:
  std::optional<std::string> lookup_in_scopes(const std::string& name, const std::string& file,
                                               const FunctionDef* scope) const;
  std::optional<std::string> lookup_module_member(const std::string& module_path) const;
  std::optional<std::string> constructor_target(const std::string& class_qname) const;
  std::vector<std::string> resolve_dispatch(const CallSite& site, const FunctionDef* fn,
                                            const std::string& file) const;

  const ProgramModel& model_;
  std::map<std::string, const FunctionDef*> functions_;
  std::map<std::string, const ClassDef*> classes_;
  std::map<std::string, std::map<std::string, std::string>> imports_;  // file -> alias -> target
  std::map<std::string, std::string> modules_;  // module name -> file
};

CallGraph build_call_graph(const ProgramModel& model);

/// Forward-reachable set from `handler`, including the handler itself.
/// Throws UnknownHandler if the handler is not a node.
std::set<std::string> reachable_functions(const std::string& handler, const CallGraph& graph,
                                          Diagnostics* diagnostics = nullptr,
                                          int max_depth = kMaxCallDepth);
std::set<std::string> reachable_functions(const ToolEntry& tool, const CallGraph& graph);

enum class DependencyKind {
  Parameter,
  Literal,
  GlobalVariable,
  ObjectField,
  CallResult,
  CallbackParameter,
  LoopVariable,
  EnvRead,
  FileRead,
  Unresolved,
  // Interior-only kinds.
  LocalVariable,
  Composite,
};

const char* to_string(DependencyKind kind);
bool is_leaf_kind(DependencyKind kind);

enum class OriginFlag { InputDependent, InternalOrStatic };

const char* to_string(OriginFlag flag);

/// (function qualified name, parameter name) pairs carrying tool input.
using InputParameters = std::set<std::pair<std::string, std::string>>;

struct DependencyTree {
  std::string text;  // source text of the explained value
  SourceLocation location;
  DependencyKind kind = DependencyKind::Unresolved;
  OriginFlag origin = OriginFlag::InternalOrStatic;
  std::string symbol;    // parameter/variable/key name where meaningful
  std::string function;  // function owning a Parameter leaf
  std::vector<DependencyTree> children;

  bool is_leaf() const { return children.empty(); }
  std::vector<const DependencyTree*> leaves() const;
};

/// Tree for an Assignment or Call statement. Parameters of the enclosing
/// function count as input unless `inputs` narrows them.
DependencyTree extract_dependency_tree(const Statement& op, const ProgramModel& model);
DependencyTree extract_dependency_tree(const Statement& op, const CallResolver& resolver,
                                       const FunctionDef* fn, const InputParameters* inputs);
/// Tree over a call's receiver and arguments.
DependencyTree extract_call_tree(const CallSite& site, const CallResolver& resolver,
                                 const FunctionDef* fn, const InputParameters* inputs);
/// Tree for an arbitrary expression evaluated at `use_line` inside `fn`.
DependencyTree extract_expression_tree(const Expression& expr, int use_line,
                                       const CallResolver& resolver, const FunctionDef* fn,
                                       const InputParameters* inputs);

/// Recomputes the origin flag from the leaves.
OriginFlag origin_from_leaves(const DependencyTree& tree, const InputParameters* inputs);

struct DependencyChain {
  DependencyTree tree;
  OriginFlag origin = OriginFlag::InternalOrStatic;
  std::string function;
};

struct ToolContext {
  ToolEntry tool;
  std::set<std::string> related_functions;
  std::vector<DependencyChain> chains;
  std::vector<CallEdge> edges;  // call edges among related functions
  InputParameters input_parameters;
  std::map<std::string, DependencyTree> call_trees;  // call-site location str -> tree
  Diagnostics diagnostics;
};

struct ContextMap {
  std::vector<ToolContext> entries;  // one per tool, in tool order

  const ToolContext* find(const ToolEntry& tool) const;
};

/// Input-carrying parameters reachable from the handler's own parameters.
InputParameters propagate_inputs(const std::string& handler, const std::set<std::string>& related,
                                 const CallResolver& resolver);

ToolContext construct_tool_context(const ToolEntry& tool, const CallGraph& graph,
                                   const CallResolver& resolver);
ContextMap construct_context_map(const ProgramModel& model, const std::vector<ToolEntry>& tools,
                                 const CallGraph& graph);

}  // namespace mcpauth
