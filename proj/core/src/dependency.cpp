#include "mcpauth/dependency.hpp"

#include <algorithm>
#include <deque>
#include <functional>

#include "util.hpp"

namespace mcpauth {

// ---------------------------------------------------------------- CallGraph

void CallGraph::add_node(const std::string& name) {
  nodes.insert(name);
  forward_edges.try_emplace(name);
  reverse_edges.try_emplace(name);
}

void CallGraph::add_edge(const std::string& caller, const std::string& callee) {
  add_node(caller);
  add_node(callee);
  forward_edges[caller].insert(callee);
  reverse_edges[callee].insert(caller);
}

void CallGraph::add_edge(const CallEdge& edge) {
  add_edge(edge.caller, edge.callee);
  auto it = std::lower_bound(call_edges.begin(), call_edges.end(), edge);
  if (it == call_edges.end() || !(*it == edge)) call_edges.insert(it, edge);
}

bool CallGraph::has_edge(const std::string& caller, const std::string& callee) const {
  auto it = forward_edges.find(caller);
  return it != forward_edges.end() && it->second.count(callee) > 0;
}

namespace {
const std::set<std::string> kNoNames;
}

const std::set<std::string>& CallGraph::callees(const std::string& name) const {
  auto it = forward_edges.find(name);
  return it == forward_edges.end() ? kNoNames : it->second;
}

const std::set<std::string>& CallGraph::callers(const std::string& name) const {
  auto it = reverse_edges.find(name);
  return it == reverse_edges.end() ? kNoNames : it->second;
}

// ------------------------------------------------------------- CallResolver

namespace {


bool is_plain_dotted(const std::string& s) {
  return !s.empty() && s.find_first_of("()[] ") == std::string::npos;
}

}  // namespace

CallResolver::CallResolver(const ProgramModel& model) : model_(model) {
  for (const auto& fn : model.functions) functions_.emplace(fn.qualified_name, &fn);
  for (const auto& cls : model.classes) classes_.emplace(cls.qualified_name, &cls);
  for (const auto& file : model.source_files) {
    auto& table = imports_[file.path];
    for (const auto& imp : file.imports) {
      if (imp.alias != "*") table[imp.alias] = imp.target;
    }
    modules_.emplace(file.module, file.path);
  }
}

const FunctionDef* CallResolver::function(const std::string& qualified_name) const {
  auto it = functions_.find(qualified_name);
  return it == functions_.end() ? nullptr : it->second;
}

bool CallResolver::is_import_alias(const std::string& name, const std::string& file) const {
  auto it = imports_.find(file);
  return it != imports_.end() && it->second.count(name) > 0;
}

std::string CallResolver::expand_imports(const std::string& dotted, const std::string& file) const {
  std::size_t end = dotted.find_first_of(".([");
  std::string head = dotted.substr(0, end);
  auto it = imports_.find(file);
  if (it == imports_.end()) return dotted;
  auto alias = it->second.find(head);
  if (alias == it->second.end()) return dotted;
  return alias->second + (end == std::string::npos ? "" : dotted.substr(end));
}

std::optional<std::string> CallResolver::lookup_in_scopes(const std::string& name,
                                                          const std::string& file,
                                                          const FunctionDef* scope) const {
  std::vector<std::string> prefixes;
  if (scope) {
    std::string chain = scope->scope.empty() ? scope->name : scope->scope + "." + scope->name;
    while (!chain.empty()) {
      if (!classes_.count(file + "::" + chain)) prefixes.push_back(chain);
      auto dot = chain.rfind('.');
      chain = dot == std::string::npos ? "" : chain.substr(0, dot);
    }
  }
  prefixes.push_back("");
  for (const auto& p : prefixes) {
    std::string q = file + "::" + (p.empty() ? name : p + "." + name);
    if (functions_.count(q) || classes_.count(q)) return q;
  }
  auto it = imports_.find(file);
  if (it != imports_.end()) {
    auto alias = it->second.find(name);
    if (alias != it->second.end()) return lookup_module_member(alias->second);
  }
  return std::nullopt;
}

std::optional<std::string> CallResolver::lookup_module_member(const std::string& path) const {
  auto parts = util::split(path, '.');
  for (std::size_t k = parts.size() - 1; k >= 1; --k) {
    std::string module = util::join(parts.begin(), parts.begin() + k, ".");
    std::vector<std::string> files;
    auto exact = modules_.find(module);
    if (exact != modules_.end()) {
      files.push_back(exact->second);
    } else {
      for (const auto& [m, f] : modules_) {
        if (util::ends_with(m, "." + module) || (!m.empty() && util::ends_with(module, "." + m))) {
          files.push_back(f);
        }
      }
    }
    std::vector<std::string> rest(parts.begin() + k, parts.end());
    for (const auto& file : files) {
      std::string q = file + "::" + rest[0];
      if (rest.size() == 1 && (functions_.count(q) || classes_.count(q))) return q;
      if (rest.size() == 2 && classes_.count(q)) {
        if (auto m = find_method(q, rest[1])) return m;
      }
      // Package re-export: `from .tools import run_query` inside __init__.py.
      auto imp = imports_.find(file);
      if (imp != imports_.end()) {
        auto alias = imp->second.find(rest[0]);
        if (alias != imp->second.end() && alias->second != path) {
          std::string target = alias->second;
          for (std::size_t i = 1; i < rest.size(); ++i) target += "." + rest[i];
          if (target.size() > path.size() || target.rfind(path, 0) != 0) {
            if (auto r = lookup_module_member(target)) return r;
          }
        }
      }
    }
    if (k == 1) break;
  }
  return std::nullopt;
}

std::optional<std::string> CallResolver::resolve_name(const std::string& dotted,
                                                      const std::string& file,
                                                      const FunctionDef* scope) const {
  if (!is_plain_dotted(dotted)) return std::nullopt;
  auto parts = util::split(dotted, '.');
  auto head = lookup_in_scopes(parts[0], file, scope);
  if (parts.size() == 1) return head;
  if (head && classes_.count(*head) && parts.size() == 2) return find_method(*head, parts[1]);
  if (is_import_alias(parts[0], file)) return lookup_module_member(expand_imports(dotted, file));
  return std::nullopt;
}

std::vector<std::string> CallResolver::base_classes(const ClassDef& cls) const {
  std::vector<std::string> out;
  for (const auto& base : cls.bases) {
    if (base.kind != ExprKind::Name && base.kind != ExprKind::Attribute) continue;
    auto r = resolve_name(base.dotted(), cls.file, nullptr);
    if (r && classes_.count(*r) && *r != cls.qualified_name) out.push_back(*r);
  }
  return out;
}

std::optional<std::string> CallResolver::find_method(const std::string& class_qname,
                                                     const std::string& method) const {
  std::set<std::string> seen;
  std::deque<std::string> queue{class_qname};
  while (!queue.empty()) {
    std::string c = queue.front();
    queue.pop_front();
    if (!seen.insert(c).second) continue;
    std::string q = c + "." + method;
    if (functions_.count(q)) return q;
    auto it = classes_.find(c);
    if (it == classes_.end()) continue;
    for (auto& b : base_classes(*it->second)) queue.push_back(b);
  }
  return std::nullopt;
}

std::optional<std::string> CallResolver::constructor_target(const std::string& class_qname) const {
  return find_method(class_qname, "__init__");
}

namespace {

// Assignment-like bindings of `receiver` visible to `fn` (its body, the
// methods of its class for `self.x`, and module scope).
template <typename Visit>
void for_each_binding(const ProgramModel& model, const std::string& receiver,
                      const FunctionDef* fn, const std::string& file, Visit&& visit) {
  auto scan = [&](const std::vector<Statement>& stmts) {
    walk_statements(stmts, [&](const Statement& s) {
      if (s.kind == StatementKind::Assignment && s.has_expression) {
        for (const auto& t : s.targets) {
          if (t.text == receiver) visit(s.expression);
        }
      } else if (s.kind == StatementKind::With && s.has_expression) {
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
          if (s.targets[i].text != receiver || s.targets[i].text.empty()) continue;
          const Expression& ctx = (s.expression.kind == ExprKind::Tuple && s.targets.size() > 1)
                                      ? s.expression.children.at(i)
                                      : s.expression;
          visit(ctx);
        }
      }
    });
  };
  if (fn) {
    if (util::starts_with(receiver, "self.") && fn->is_method()) {
      for (const auto& other : model.functions) {
        if (other.enclosing_class == fn->enclosing_class) scan(other.body);
      }
    } else {
      scan(fn->body);
    }
  }
  std::vector<Statement> module_level;
  for (const auto& s : model.module_statements) {
    if (s.location.file == file) module_level.push_back(s);
  }
  scan(module_level);
}

}  // namespace

std::optional<std::string> CallResolver::receiver_class(const std::string& receiver,
                                                        const FunctionDef* fn,
                                                        const std::string& file) const {
  std::optional<std::string> found;
  for_each_binding(model_, receiver, fn, file, [&](const Expression& value) {
    if (found || value.kind != ExprKind::Call) return;
    auto r = resolve_name(value.children.front().dotted(), file, fn);
    if (r && classes_.count(*r)) found = r;
  });
  return found;
}

std::optional<std::string> CallResolver::receiver_constructor(const std::string& receiver,
                                                              const FunctionDef* fn,
                                                              const std::string& file) const {
  std::optional<std::string> found;
  for_each_binding(model_, receiver, fn, file, [&](const Expression& value) {
    if (found) return;
    const Expression* v = &value;
    if (v->kind == ExprKind::Await && !v->children.empty()) v = &v->children.front();
    if (v->kind != ExprKind::Call) return;
    std::string callee = v->children.front().dotted();
    if (!is_plain_dotted(callee)) return;
    auto r = resolve_name(callee, file, fn);
    if (r) return;
    found = expand_imports(callee, file) + "()";
  });
  return found;
}

std::vector<std::string> CallResolver::resolve_dispatch(const CallSite& site,
                                                        const FunctionDef* fn,
                                                        const std::string& file) const {
  const Expression& callee = site.call.children.front();
  const Expression* table = nullptr;
  if (callee.kind == ExprKind::Subscript) {
    table = &callee.children.front();
  } else if (callee.kind == ExprKind::Call && callee.children.front().kind == ExprKind::Attribute &&
             callee.children.front().name == "get") {
    table = &callee.children.front().children.front();
  }
  if (!table || (table->kind != ExprKind::Name && table->kind != ExprKind::Attribute)) return {};
  std::vector<std::string> out;
  for_each_binding(model_, table->text, fn, file, [&](const Expression& value) {
    if (value.kind != ExprKind::Dict) return;
    for (std::size_t i = 1; i < value.children.size(); i += 2) {
      auto r = resolve_reference(value.children[i], fn ? fn->qualified_name : "", file);
      if (r) out.push_back(*r);
    }
  });
  if (fn && fn->is_method() && util::starts_with(table->text, "self.")) {
    // Class-level tables: `HANDLERS = {...}` referenced as self.HANDLERS.
    std::string attr = table->text.substr(5);
    if (auto cls = classes_.find(fn->enclosing_class); cls != classes_.end()) {
      for (const auto& s : cls->second->body) {
        if (s.kind != StatementKind::Assignment || s.expression.kind != ExprKind::Dict) continue;
        for (const auto& t : s.targets) {
          if (t.text != attr) continue;
          for (std::size_t i = 1; i < s.expression.children.size(); i += 2) {
            auto r = resolve_reference(s.expression.children[i], fn->qualified_name, file);
            if (r) out.push_back(*r);
          }
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::optional<std::string> CallResolver::resolve_reference(const Expression& expr,
                                                           const std::string& enclosing_function,
                                                           const std::string& file) const {
  if (expr.kind != ExprKind::Name && expr.kind != ExprKind::Attribute) return std::nullopt;
  const FunctionDef* fn = function(enclosing_function);
  std::string dotted = expr.dotted();
  auto parts = util::split(dotted, '.');
  if (fn && fn->is_method() && parts.size() == 2 && (parts[0] == "self" || parts[0] == "cls")) {
    return find_method(fn->enclosing_class, parts[1]);
  }
  auto r = resolve_name(dotted, file, fn);
  if (r && functions_.count(*r)) return r;
  return std::nullopt;
}

std::vector<std::string> CallResolver::resolve(const CallSite& site) const {
  const FunctionDef* fn = function(site.enclosing_function);
  const std::string& file = site.location.file;
  const std::string& s = site.callee_expression;
  const Expression& callee = site.call.children.front();

  auto as_callable = [&](const std::optional<std::string>& r) -> std::vector<std::string> {
    if (!r) return {};
    if (functions_.count(*r)) return {*r};
    if (classes_.count(*r)) {
      if (auto init = constructor_target(*r)) return {*init};
    }
    return {};
  };

  if (callee.kind == ExprKind::Subscript ||
      (callee.kind == ExprKind::Call && callee.children.front().kind == ExprKind::Attribute)) {
    return resolve_dispatch(site, fn, file);
  }
  if (util::starts_with(s, "super().")) {
    if (!fn || !fn->is_method()) return {};
    auto cls = classes_.find(fn->enclosing_class);
    if (cls == classes_.end()) return {};
    for (const auto& base : base_classes(*cls->second)) {
      if (auto m = find_method(base, s.substr(8))) return {*m};
    }
    return {};
  }
  if (callee.kind == ExprKind::Attribute && callee.children.front().kind == ExprKind::Call) {
    // `Cls().method()`
    const Expression& inner = callee.children.front().children.front();
    auto r = resolve_name(inner.dotted(), file, fn);
    if (r && classes_.count(*r)) return as_callable(find_method(*r, callee.name));
    return {};
  }
  if (!is_plain_dotted(s)) return {};
  auto parts = util::split(s, '.');
  if (parts.size() == 1) return as_callable(lookup_in_scopes(parts[0], file, fn));

  if (fn && fn->is_method() && (parts[0] == "self" || parts[0] == "cls")) {
    if (parts.size() == 2) return as_callable(find_method(fn->enclosing_class, parts[1]));
    if (parts.size() == 3) {
      if (auto cls = receiver_class(parts[0] + "." + parts[1], fn, file)) {
        return as_callable(find_method(*cls, parts[2]));
      }
    }
    return {};
  }
  if (parts.size() == 2) {
    if (auto cls = receiver_class(parts[0], fn, file)) {
      return as_callable(find_method(*cls, parts[1]));
    }
  }
  return as_callable(resolve_name(s, file, fn));
}

// ---------------------------------------------------------------- CallGraph

CallGraph build_call_graph(const ProgramModel& model) {
  CallGraph graph;
  CallResolver resolver(model);
  for (const auto& fn : model.functions) graph.add_node(fn.qualified_name);
  for (const auto& fn : model.functions) {
    for (const auto& site : fn.call_sites) {
      for (const auto& callee : resolver.resolve(site)) {
        graph.add_edge(CallEdge{fn.qualified_name, callee, site.location, false});
      }
      auto add_callback = [&](const Expression& arg) {
        if (auto r = resolver.resolve_reference(arg, fn.qualified_name, fn.file)) {
          graph.add_edge(CallEdge{fn.qualified_name, *r, arg.location, true});
        }
      };
      for (const auto& arg : site.arguments) add_callback(arg);
      for (const auto& [_, arg] : site.keyword_arguments) add_callback(arg);
    }
  }
  return graph;
}

std::set<std::string> reachable_functions(const std::string& handler, const CallGraph& graph,
                                          Diagnostics* diagnostics, int max_depth) {
  if (!graph.nodes.count(handler)) throw UnknownHandler("handler not in call graph: " + handler);
  std::set<std::string> visited{handler};
  std::deque<std::pair<std::string, int>> queue{{handler, 0}};
  bool capped = false;
  while (!queue.empty()) {
    auto [node, depth] = queue.front();
    queue.pop_front();
    for (const auto& next : graph.callees(node)) {
      if (visited.count(next)) continue;
      if (depth >= max_depth) {
        capped = true;
        continue;
      }
      visited.insert(next);
      queue.emplace_back(next, depth + 1);
    }
  }
  if (capped && diagnostics) {
    diagnostics->push_back({DiagnosticKind::DepthLimit,
                            "call depth limit of " + std::to_string(max_depth) +
                                " reached from " + handler,
                            std::nullopt});
  }
  return visited;
}

std::set<std::string> reachable_functions(const ToolEntry& tool, const CallGraph& graph) {
  return reachable_functions(tool.handler, graph);
}

// ---------------------------------------------------------- DependencyTree

const char* to_string(DependencyKind kind) {
  switch (kind) {
    case DependencyKind::Parameter: return "Parameter";
    case DependencyKind::Literal: return "Literal";
    case DependencyKind::GlobalVariable: return "GlobalVariable";
    case DependencyKind::ObjectField: return "ObjectField";
    case DependencyKind::CallResult: return "CallResult";
    case DependencyKind::CallbackParameter: return "CallbackParameter";
    case DependencyKind::LoopVariable: return "LoopVariable";
    case DependencyKind::EnvRead: return "EnvRead";
    case DependencyKind::FileRead: return "FileRead";
    case DependencyKind::Unresolved: return "Unresolved";
    case DependencyKind::LocalVariable: return "LocalVariable";
    case DependencyKind::Composite: return "Composite";
  }
  return "Unresolved";
}

bool is_leaf_kind(DependencyKind kind) {
  return kind != DependencyKind::LocalVariable && kind != DependencyKind::Composite;
}

const char* to_string(OriginFlag flag) {
  return flag == OriginFlag::InputDependent ? "InputDependent" : "InternalOrStatic";
}

std::vector<const DependencyTree*> DependencyTree::leaves() const {
  std::vector<const DependencyTree*> out;
  std::function<void(const DependencyTree&)> visit = [&](const DependencyTree& t) {
    if (t.children.empty()) {
      out.push_back(&t);
      return;
    }
    for (const auto& c : t.children) visit(c);
  };
  visit(*this);
  return out;
}

namespace {

bool leaf_is_input(const DependencyTree& leaf, const InputParameters* inputs) {
  if (leaf.kind == DependencyKind::CallbackParameter) return true;
  if (leaf.kind != DependencyKind::Parameter) return false;
  if (inputs) return inputs->count({leaf.function, leaf.symbol}) > 0;
  return leaf.symbol != "self" && leaf.symbol != "cls";
}

void assign_origins(DependencyTree& tree, const InputParameters* inputs) {
  bool input = false;
  if (tree.children.empty()) {
    input = leaf_is_input(tree, inputs);
  } else {
    for (auto& c : tree.children) {
      assign_origins(c, inputs);
      input = input || c.origin == OriginFlag::InputDependent;
    }
  }
  tree.origin = input ? OriginFlag::InputDependent : OriginFlag::InternalOrStatic;
}

const std::set<std::string> kEnvReaders = {
    "os.getenv", "os.environ.get", "os.environ.setdefault", "os.environ.pop", "os.getenvb",
    "dotenv.get_key", "dotenv.dotenv_values", "decouple.config", "environ.Env()"};

const std::set<std::string> kFileLoaders = {
    "open",        "io.open",        "codecs.open",    "builtins.open", "json.load",
    "yaml.load",   "yaml.safe_load", "toml.load",      "tomllib.load",  "pickle.load",
    "csv.reader",  "csv.DictReader", "configparser.ConfigParser().read"};

const std::set<std::string> kContainerConstructors = {
    "list", "dict", "tuple", "set", "frozenset", "List", "Dict", "Tuple", "Set",
    "Optional", "typing.List", "typing.Dict", "typing.Optional", "sorted", "reversed"};

struct Definition {
  int line = 0;
  enum class Kind { Value, Loop, Opaque } kind = Kind::Value;
  const Expression* value = nullptr;
};

void collect_names(const Expression& target, std::vector<std::string>& out) {
  if (target.kind == ExprKind::Name) {
    if (!target.name.empty()) out.push_back(target.name);
  } else if (target.kind == ExprKind::Tuple || target.kind == ExprKind::List ||
             target.kind == ExprKind::Starred) {
    for (const auto& c : target.children) collect_names(c, out);
  }
}

class TreeBuilder {
 public:
  TreeBuilder(const CallResolver& resolver, const FunctionDef* fn, const InputParameters* inputs,
              std::string file)
      : r_(resolver), fn_(fn), inputs_(inputs), file_(std::move(file)) {
    if (!fn_) return;
    walk_statements(fn_->body, [&](const Statement& s) {
      if (s.keyword == "global") {
        for (const auto& n : s.names) globals_.insert(n);
      }
      if (s.kind == StatementKind::Assignment && s.has_expression) {
        for (const auto& t : s.targets) {
          std::vector<std::string> names;
          collect_names(t, names);
          for (const auto& n : names) defs_[n].push_back({s.location.line, Definition::Kind::Value, &s.expression});
        }
      } else if (s.kind == StatementKind::Loop && s.keyword == "for") {
        for (const auto& t : s.targets) {
          std::vector<std::string> names;
          collect_names(t, names);
          for (const auto& n : names) defs_[n].push_back({s.location.line, Definition::Kind::Loop, &s.expression});
        }
      } else if (s.kind == StatementKind::With) {
        for (std::size_t i = 0; i < s.targets.size(); ++i) {
          const Expression* ctx = (s.expression.kind == ExprKind::Tuple && s.targets.size() > 1)
                                      ? &s.expression.children.at(i)
                                      : &s.expression;
          std::vector<std::string> names;
          collect_names(s.targets[i], names);
          for (const auto& n : names) defs_[n].push_back({s.location.line, Definition::Kind::Value, ctx});
        }
      } else if (s.keyword == "except") {
        for (const auto& t : s.targets) defs_[t.name].push_back({s.location.line, Definition::Kind::Opaque, nullptr});
      }
    });
  }

  DependencyTree build(const Expression& e, int use_line) {
    if (++depth_ > 64) {
      --depth_;
      return leaf(e, DependencyKind::Unresolved);
    }
    DependencyTree t = dispatch(e, use_line);
    --depth_;
    return t;
  }

 private:
  DependencyTree leaf(const Expression& e, DependencyKind kind, std::string symbol = {}) const {
    DependencyTree t;
    t.text = e.text;
    t.location = e.location;
    t.kind = kind;
    t.symbol = std::move(symbol);
    return t;
  }

  DependencyTree composite(const Expression& e, std::vector<DependencyTree> children,
                           DependencyKind empty_kind = DependencyKind::Literal) const {
    if (children.empty()) return leaf(e, empty_kind);
    DependencyTree t = leaf(e, DependencyKind::Composite);
    t.children = std::move(children);
    return t;
  }

  const DependencyTree* bound(const std::string& name) const {
    for (auto it = bound_.rbegin(); it != bound_.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return &f->second;
    }
    return nullptr;
  }

  bool is_module_global(const std::string& name) const {
    for (const auto& s : r_.model().module_statements) {
      if (s.location.file != file_ || s.kind != StatementKind::Assignment) continue;
      for (const auto& t : s.targets) {
        std::vector<std::string> names;
        collect_names(t, names);
        if (std::find(names.begin(), names.end(), name) != names.end()) return true;
      }
    }
    return false;
  }

  DependencyTree from_definitions(const Expression& e, const std::string& name,
                                  const std::vector<Definition>& defs, int use_line) {
    std::vector<const Definition*> reaching;
    for (const auto& d : defs) {
      if (d.line < use_line) reaching.push_back(&d);
    }
    if (reaching.empty()) {
      for (const auto& d : defs) reaching.push_back(&d);
    }
    std::vector<DependencyTree> children;
    for (const Definition* d : reaching) {
      auto key = std::make_pair(name, d->line);
      if (active_.count(key)) continue;
      active_.insert(key);
      if (d->kind == Definition::Kind::Opaque || !d->value) {
        children.push_back(leaf(e, DependencyKind::Unresolved, name));
      } else if (d->kind == Definition::Kind::Loop) {
        DependencyTree loop = leaf(e, DependencyKind::LoopVariable, name);
        loop.children.push_back(build(*d->value, d->line));
        children.push_back(std::move(loop));
      } else {
        children.push_back(build(*d->value, d->line));
      }
      active_.erase(key);
    }
    if (children.empty()) return leaf(e, DependencyKind::Unresolved, name);
    if (children.size() == 1 && children.front().kind == DependencyKind::LoopVariable) {
      return std::move(children.front());
    }
    DependencyTree t = leaf(e, DependencyKind::LocalVariable, name);
    t.children = std::move(children);
    return t;
  }

  DependencyTree name_tree(const Expression& e, int use_line) {
    const std::string& n = e.name;
    if (const DependencyTree* b = bound(n)) {
      DependencyTree t = *b;
      t.text = e.text;
      t.location = e.location;
      return t;
    }
    if (fn_ && !globals_.count(n)) {
      auto defs = defs_.find(n);
      const Parameter* param = fn_->parameter(n);
      bool preceded = false;
      if (defs != defs_.end()) {
        for (const auto& d : defs->second) preceded = preceded || d.line < use_line;
      }
      if (defs != defs_.end() && (!param || preceded)) {
        return from_definitions(e, n, defs->second, use_line);
      }
      if (param) {
        DependencyTree t = leaf(e, DependencyKind::Parameter, n);
        t.function = fn_->qualified_name;
        return t;
      }
      // Closure over an enclosing function's locals.
      if (!fn_->scope.empty()) {
        if (const FunctionDef* parent = r_.function(fn_->file + "::" + fn_->scope)) {
          TreeBuilder outer(r_, parent, inputs_, file_);
          if (outer.defines(n)) return outer.build(e, fn_->location.line);
        }
      }
    }
    if (auto ref = r_.resolve_name(n, file_, fn_)) return leaf(e, DependencyKind::Literal, *ref);
    if (is_module_global(n)) return leaf(e, DependencyKind::GlobalVariable, n);
    if (r_.is_import_alias(n, file_)) {
      return leaf(e, DependencyKind::GlobalVariable, r_.expand_imports(n, file_));
    }
    return leaf(e, DependencyKind::Unresolved, n);
  }

  bool defines(const std::string& name) const {
    return defs_.count(name) || (fn_ && fn_->parameter(name));
  }

  static bool contains_kind(const DependencyTree& t, DependencyKind kind) {
    if (t.kind == kind) return true;
    return std::any_of(t.children.begin(), t.children.end(),
                       [&](const DependencyTree& c) { return contains_kind(c, kind); });
  }

  static std::string first_string_argument(const Expression& call) {
    for (std::size_t i = 1; i < call.children.size(); ++i) {
      if (call.children[i].is_string_literal()) return call.children[i].name;
    }
    return {};
  }

  bool is_data_receiver(const Expression& recv) const {
    if (recv.kind == ExprKind::Call && recv.children.front().kind == ExprKind::Name &&
        recv.children.front().name == "super") {
      return false;
    }
    std::string dotted = recv.dotted();
    std::string head = dotted.substr(0, dotted.find_first_of(".(["));
    if (recv.kind == ExprKind::Name || recv.kind == ExprKind::Attribute) {
      if (bound(head) || (fn_ && defines(head))) return true;
      if (r_.is_import_alias(head, file_)) return false;
      if (auto ref = r_.resolve_name(head, file_, fn_)) return false;
    }
    return true;
  }

  DependencyTree call_tree(const Expression& e, int use_line) {
    const Expression& callee = e.children.front();
    std::string dotted = callee.dotted();
    std::string expanded = r_.expand_imports(dotted, file_);
    std::string tail = callee.kind == ExprKind::Attribute ? callee.name : dotted;

    if (kEnvReaders.count(expanded) || util::ends_with(expanded, "environ.get") ||
        (tail == "config" && util::starts_with(expanded, "decouple"))) {
      return leaf(e, DependencyKind::EnvRead, first_string_argument(e));
    }
    if (kFileLoaders.count(expanded)) {
      std::string path = e.children.size() > 1 ? e.children[1].text : std::string();
      if (e.children.size() > 1 && e.children[1].is_string_literal()) path = e.children[1].name;
      return leaf(e, DependencyKind::FileRead, path);
    }
    if (callee.kind == ExprKind::Attribute &&
        (tail == "read_text" || tail == "read_bytes" || tail == "read" || tail == "readlines" ||
         tail == "readline" || tail == "load" || tail == "safe_load")) {
      DependencyTree recv = build(callee.children.front(), use_line);
      bool file_source = tail == "read_text" || tail == "read_bytes" ||
                         contains_kind(recv, DependencyKind::FileRead);
      if (file_source) {
        std::string symbol = callee.children.front().text;
        std::function<void(const DependencyTree&)> find = [&](const DependencyTree& t) {
          if (t.kind == DependencyKind::FileRead && !t.symbol.empty()) symbol = t.symbol;
          for (const auto& c : t.children) find(c);
        };
        find(recv);
        return leaf(e, DependencyKind::FileRead, symbol);
      }
    }
    if (tail == "load" || tail == "safe_load") {
      // json.load(fh) where fh came from open(...)
      for (std::size_t i = 1; i < e.children.size(); ++i) {
        DependencyTree arg = build(e.children[i], use_line);
        if (contains_kind(arg, DependencyKind::FileRead)) {
          return leaf(e, DependencyKind::FileRead, arg.symbol);
        }
      }
    }
    if (kContainerConstructors.count(expanded)) {
      std::vector<DependencyTree> children;
      for (std::size_t i = 1; i < e.children.size(); ++i) children.push_back(build(e.children[i], use_line));
      for (const auto& [_, v] : e.keywords) children.push_back(build(v, use_line));
      return composite(e, std::move(children));
    }

    DependencyTree t = leaf(e, DependencyKind::CallResult, expanded);
    if (callee.kind == ExprKind::Attribute && is_data_receiver(callee.children.front())) {
      t.children.push_back(build(callee.children.front(), use_line));
    }
    std::vector<const Expression*> args;
    for (std::size_t i = 1; i < e.children.size(); ++i) args.push_back(&e.children[i]);
    for (const auto& [_, v] : e.keywords) args.push_back(&v);
    std::vector<DependencyTree> plain;
    for (const Expression* a : args) {
      if (a->kind != ExprKind::Lambda) plain.push_back(build(*a, use_line));
    }
    for (const Expression* a : args) {
      if (a->kind == ExprKind::Lambda) t.children.push_back(lambda_tree(*a, use_line, &plain));
    }
    for (auto& p : plain) t.children.push_back(std::move(p));
    return t;
  }

  DependencyTree lambda_tree(const Expression& e, int use_line,
                             const std::vector<DependencyTree>* siblings) {
    std::map<std::string, DependencyTree> scope;
    for (const auto& p : e.parameters) {
      DependencyTree cb = leaf(e, DependencyKind::CallbackParameter, p);
      if (siblings) cb.children = *siblings;
      scope.emplace(p, std::move(cb));
    }
    bound_.push_back(std::move(scope));
    std::vector<DependencyTree> children;
    if (!e.children.empty()) children.push_back(build(e.children.front(), use_line));
    bound_.pop_back();
    return composite(e, std::move(children));
  }

  DependencyTree comprehension_tree(const Expression& e, int use_line) {
    std::size_t pushed = 0;
    for (const auto& gen : e.generators) {
      DependencyTree iter = build(gen.children.at(1), use_line);
      std::vector<std::string> names;
      collect_names(gen.children.at(0), names);
      std::map<std::string, DependencyTree> scope;
      for (const auto& n : names) {
        DependencyTree loop = leaf(gen.children.at(0), DependencyKind::LoopVariable, n);
        loop.children.push_back(iter);
        scope.emplace(n, std::move(loop));
      }
      bound_.push_back(std::move(scope));
      ++pushed;
    }
    std::vector<DependencyTree> children;
    for (const auto& c : e.children) children.push_back(build(c, use_line));
    bound_.resize(bound_.size() - pushed);
    return composite(e, std::move(children));
  }

  DependencyTree dispatch(const Expression& e, int use_line) {
    switch (e.kind) {
      case ExprKind::Literal:
        return leaf(e, DependencyKind::Literal, e.name);
      case ExprKind::Name:
        return name_tree(e, use_line);
      case ExprKind::Attribute: {
        std::string dotted = e.dotted();
        std::string expanded = r_.expand_imports(dotted, file_);
        if (util::starts_with(expanded, "os.environ")) return leaf(e, DependencyKind::EnvRead);
        std::string head = dotted.substr(0, dotted.find_first_of(".(["));
        if (!bound(head) && !(fn_ && defines(head)) && r_.is_import_alias(head, file_)) {
          return leaf(e, DependencyKind::GlobalVariable, expanded);
        }
        if (auto ref = r_.resolve_reference(e, fn_ ? fn_->qualified_name : "", file_)) {
          return leaf(e, DependencyKind::Literal, *ref);
        }
        DependencyTree t = leaf(e, DependencyKind::ObjectField, e.name);
        t.children.push_back(build(e.children.front(), use_line));
        return t;
      }
      case ExprKind::Subscript: {
        std::string expanded = r_.expand_imports(e.children.front().dotted(), file_);
        if (expanded == "os.environ") {
          const Expression& key = e.children.at(1);
          return leaf(e, DependencyKind::EnvRead, key.is_string_literal() ? key.name : key.text);
        }
        std::vector<DependencyTree> children;
        for (const auto& c : e.children) children.push_back(build(c, use_line));
        return composite(e, std::move(children));
      }
      case ExprKind::Call:
        return call_tree(e, use_line);
      case ExprKind::Lambda:
        return lambda_tree(e, use_line, nullptr);
      case ExprKind::Comprehension:
        return comprehension_tree(e, use_line);
      case ExprKind::Conditional: {
        std::vector<DependencyTree> children;
        children.push_back(build(e.children.at(0), use_line));
        children.push_back(build(e.children.at(2), use_line));
        return composite(e, std::move(children));
      }
      case ExprKind::NamedExpr:
        return build(e.children.at(1), use_line);
      default: {
        std::vector<DependencyTree> children;
        for (const auto& c : e.children) children.push_back(build(c, use_line));
        for (const auto& [_, v] : e.keywords) children.push_back(build(v, use_line));
        return composite(e, std::move(children));
      }
    }
  }

  const CallResolver& r_;
  const FunctionDef* fn_;
  const InputParameters* inputs_;
  std::string file_;
  std::map<std::string, std::vector<Definition>> defs_;
  std::set<std::string> globals_;
  std::vector<std::map<std::string, DependencyTree>> bound_;
  std::set<std::pair<std::string, int>> active_;
  int depth_ = 0;
};

std::string statement_text(const Statement& op) {
  std::string text;
  for (const auto& t : op.targets) text += t.text + " = ";
  return text + op.expression.text;
}

}  // namespace

OriginFlag origin_from_leaves(const DependencyTree& tree, const InputParameters* inputs) {
  for (const DependencyTree* l : tree.leaves()) {
    if (leaf_is_input(*l, inputs)) return OriginFlag::InputDependent;
  }
  return OriginFlag::InternalOrStatic;
}

DependencyTree extract_expression_tree(const Expression& expr, int use_line,
                                       const CallResolver& resolver, const FunctionDef* fn,
                                       const InputParameters* inputs) {
  std::string file = fn ? fn->file : expr.location.file;
  TreeBuilder builder(resolver, fn, inputs, file);
  DependencyTree t = builder.build(expr, use_line);
  assign_origins(t, inputs);
  return t;
}

DependencyTree extract_dependency_tree(const Statement& op, const CallResolver& resolver,
                                       const FunctionDef* fn, const InputParameters* inputs) {
  TreeBuilder builder(resolver, fn, inputs, fn ? fn->file : op.location.file);
  DependencyTree root;
  root.location = op.location;
  if (op.kind == StatementKind::Assignment) {
    root.text = statement_text(op);
    root.kind = DependencyKind::Composite;
    for (const auto& t : op.targets) {
      std::vector<std::string> names;
      collect_names(t, names);
      for (const auto& n : names) root.symbol += (root.symbol.empty() ? "" : ",") + n;
      if (names.empty()) root.symbol = t.text;
    }
    root.children.push_back(builder.build(op.expression, op.location.line));
  } else if (op.has_expression) {
    root = builder.build(op.expression, op.location.line);
  } else {
    root.text = op.keyword;
    root.kind = DependencyKind::Literal;
  }
  assign_origins(root, inputs);
  return root;
}

DependencyTree extract_dependency_tree(const Statement& op, const ProgramModel& model) {
  CallResolver resolver(model);
  return extract_dependency_tree(op, resolver, model.enclosing_function(op.location), nullptr);
}

DependencyTree extract_call_tree(const CallSite& site, const CallResolver& resolver,
                                 const FunctionDef* fn, const InputParameters* inputs) {
  return extract_expression_tree(site.call, site.location.line, resolver, fn, inputs);
}

// -------------------------------------------------------------- ContextMap

const ToolContext* ContextMap::find(const ToolEntry& tool) const {
  for (const auto& e : entries) {
    if (e.tool == tool) return &e;
  }
  return nullptr;
}

namespace {

bool is_staticmethod(const FunctionDef& fn) {
  return std::any_of(fn.decorators.begin(), fn.decorators.end(),
                     [](const DecoratorRecord& d) { return d.callee == "staticmethod"; });
}

int receiver_offset(const FunctionDef& callee) {
  return callee.is_method() && !is_staticmethod(callee) ? 1 : 0;
}

}  // namespace

InputParameters propagate_inputs(const std::string& handler, const std::set<std::string>& related,
                                 const CallResolver& resolver) {
  InputParameters inputs;
  const FunctionDef* h = resolver.function(handler);
  if (!h) return inputs;
  for (std::size_t i = receiver_offset(*h); i < h->parameters.size(); ++i) {
    inputs.insert({handler, h->parameters[i].name});
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& name : related) {
      const FunctionDef* fn = resolver.function(name);
      if (!fn) continue;
      for (const auto& site : fn->call_sites) {
        for (const auto& callee_name : resolver.resolve(site)) {
          if (!related.count(callee_name)) continue;
          const FunctionDef* callee = resolver.function(callee_name);
          if (!callee) continue;
          auto mark = [&](const std::string& param) {
            if (inputs.insert({callee_name, param}).second) changed = true;
          };
          auto tainted = [&](const Expression& arg) {
            return extract_expression_tree(arg, site.location.line, resolver, fn, &inputs).origin ==
                   OriginFlag::InputDependent;
          };
          std::size_t offset = receiver_offset(*callee);
          for (std::size_t i = 0; i < site.arguments.size(); ++i) {
            if (!tainted(site.arguments[i])) continue;
            std::size_t idx = i + offset;
            const auto& params = callee->parameters;
            std::size_t positional = 0;
            while (positional < params.size() && !params[positional].variadic &&
                   !params[positional].keyword_only) {
              ++positional;
            }
            if (site.arguments[i].kind == ExprKind::Starred) {
              for (std::size_t k = idx; k < params.size(); ++k) mark(params[k].name);
            } else if (idx < positional) {
              mark(params[idx].name);
            } else if (positional < params.size() && params[positional].variadic) {
              mark(params[positional].name);
            }
          }
          for (const auto& [kw, arg] : site.keyword_arguments) {
            if (!tainted(arg)) continue;
            if (kw == "**") {
              for (std::size_t k = offset; k < callee->parameters.size(); ++k) {
                mark(callee->parameters[k].name);
              }
            } else if (callee->parameter(kw)) {
              mark(kw);
            } else if (!callee->parameters.empty() && callee->parameters.back().variadic) {
              mark(callee->parameters.back().name);
            }
          }
        }
      }
    }
  }
  return inputs;
}

ToolContext construct_tool_context(const ToolEntry& tool, const CallGraph& graph,
                                   const CallResolver& resolver) {
  ToolContext ctx;
  ctx.tool = tool;
  try {
    ctx.related_functions = reachable_functions(tool.handler, graph, &ctx.diagnostics);
  } catch (const UnknownHandler& e) {
    ctx.diagnostics.push_back({DiagnosticKind::UnknownHandler, e.what(), tool.location});
    return ctx;
  }
  ctx.input_parameters = propagate_inputs(tool.handler, ctx.related_functions, resolver);
  for (const auto& edge : graph.call_edges) {
    if (ctx.related_functions.count(edge.caller) && ctx.related_functions.count(edge.callee)) {
      ctx.edges.push_back(edge);
    }
  }
  for (const auto& name : ctx.related_functions) {
    const FunctionDef* fn = resolver.function(name);
    if (!fn) continue;
    walk_statements(fn->body, [&](const Statement& s) {
      if (s.kind != StatementKind::Assignment && s.kind != StatementKind::Call) return;
      DependencyChain chain;
      chain.tree = extract_dependency_tree(s, resolver, fn, &ctx.input_parameters);
      chain.origin = chain.tree.origin;
      chain.function = name;
      ctx.chains.push_back(std::move(chain));
    });
    for (const auto& site : fn->call_sites) {
      ctx.call_trees.emplace(site.location.str(),
                             extract_call_tree(site, resolver, fn, &ctx.input_parameters));
    }
  }
  return ctx;
}

ContextMap construct_context_map(const ProgramModel& model, const std::vector<ToolEntry>& tools,
                                 const CallGraph& graph) {
  CallResolver resolver(model);
  ContextMap map;
  for (const auto& tool : tools) map.entries.push_back(construct_tool_context(tool, graph, resolver));
  return map;
}

}  // namespace mcpauth
