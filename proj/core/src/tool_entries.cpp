#include "mcpauth/tool_entries.hpp"

#include <algorithm>
#include <optional>

#include "mcpauth/dependency.hpp"
#include "util.hpp"

namespace mcpauth {

const char* to_string(RegistrationPattern pattern) {
  switch (pattern) {
    case RegistrationPattern::DecoratorBased: return "DecoratorBased";
    case RegistrationPattern::AddToolApi: return "AddToolApi";
    case RegistrationPattern::ToolObject: return "ToolObject";
    case RegistrationPattern::RouteOperationId: return "RouteOperationId";
    case RegistrationPattern::RuntimeEnumeration: return "RuntimeEnumeration";
    case RegistrationPattern::RegisterApi: return "RegisterApi";
    case RegistrationPattern::ToolHandlerSubclass: return "ToolHandlerSubclass";
  }
  return "DecoratorBased";
}

RegistrationPattern registration_pattern_from_string(std::string_view text) {
  for (auto p : {RegistrationPattern::DecoratorBased, RegistrationPattern::AddToolApi,
                 RegistrationPattern::ToolObject, RegistrationPattern::RouteOperationId,
                 RegistrationPattern::RuntimeEnumeration, RegistrationPattern::RegisterApi,
                 RegistrationPattern::ToolHandlerSubclass}) {
    if (text == to_string(p)) return p;
  }
  throw ConfigError("unknown registration pattern: " + std::string(text));
}

namespace {

const std::vector<std::string> kHandlerKeywords = {"handler", "fn", "func", "function", "callback"};
const std::vector<std::string> kHandlerMethods = {"run_tool", "run",    "execute", "call",
                                                  "__call__", "handle", "invoke"};
const std::set<std::string> kRouteVerbs = {"get", "post", "put", "delete", "patch", "api_route"};

std::string tail_of(const std::string& dotted) {
  auto dot = dotted.rfind('.');
  return dot == std::string::npos ? dotted : dotted.substr(dot + 1);
}

std::optional<std::string> literal(const Expression* e) {
  if (e && e->is_string_literal() && !e->name.empty()) return e->name;
  return std::nullopt;
}

template <typename Map>
const Expression* keyword(const Map& kws, const std::string& name) {
  auto it = kws.find(name);
  return it == kws.end() ? nullptr : &it->second;
}

struct Candidate {
  ToolEntry entry;
  bool dispatch_attached = false;
};

class Extractor {
 public:
  explicit Extractor(const ProgramModel& model) : model_(model), resolver_(model) {}

  ToolExtraction run() {
    scan_decorators();
    scan_call_sites();
    scan_classes();
    scan_enumerations();
    attach_dispatch_objects();
    return finish();
  }

 private:
  bool imported_from_mcp(const std::string& alias, const std::string& file) const {
    const SourceFile* sf = model_.find_file(file);
    if (!sf) return false;
    for (const auto& imp : sf->imports) {
      if (imp.alias == alias && util::lower(imp.target).find("mcp") != std::string::npos) return true;
    }
    return false;
  }

  std::string describe(const FunctionDef& fn, const DecoratorRecord* d) const {
    if (d) {
      if (auto desc = literal(keyword(d->keyword_arguments, "description"))) return *desc;
    }
    return util::trim(fn.docstring);
  }

  void add(ToolEntry entry, bool dispatch = false) {
    candidates_.push_back({std::move(entry), dispatch});
  }

  void scan_decorators() {
    for (const auto& fn : model_.functions) {
      for (const auto& d : fn.decorators) {
        std::string tail = tail_of(d.callee);
        bool has_receiver = d.callee.find('.') != std::string::npos;
        const Expression* first = d.arguments.empty() ? nullptr : &d.arguments.front();
        auto name = [&] {
          if (auto s = literal(first)) return *s;
          if (auto s = literal(keyword(d.keyword_arguments, "name"))) return *s;
          return fn.name;
        };
        if (tail == "tool" && (has_receiver || imported_from_mcp(d.callee, fn.file))) {
          add({name(), fn.qualified_name, RegistrationPattern::DecoratorBased, d.location,
               describe(fn, &d)});
        } else if (tail == "call_tool") {
          dispatchers_.push_back({&fn, &d});
        } else if (tail == "register_tool") {
          add({name(), fn.qualified_name, RegistrationPattern::RegisterApi, d.location,
               describe(fn, &d)});
        } else if (kRouteVerbs.count(tail) && has_receiver) {
          if (auto op = literal(keyword(d.keyword_arguments, "operation_id"))) {
            add({*op, fn.qualified_name, RegistrationPattern::RouteOperationId, d.location,
                 describe(fn, &d)});
          }
        }
      }
    }
  }

  std::vector<const CallSite*> all_call_sites() const {
    std::vector<const CallSite*> sites;
    for (const auto& sf : model_.source_files) {
      for (const auto& cs : sf.module_call_sites) sites.push_back(&cs);
    }
    for (const auto& fn : model_.functions) {
      for (const auto& cs : fn.call_sites) sites.push_back(&cs);
    }
    return sites;
  }

  std::optional<std::string> handler_of(const Expression* e, const CallSite& site) const {
    if (!e) return std::nullopt;
    return resolver_.resolve_reference(*e, site.enclosing_function, site.location.file);
  }

  void unresolved(const CallSite& site, const std::string& what) {
    diagnostics_.push_back({DiagnosticKind::UnresolvedHandler,
                            "cannot resolve handler for " + what + " `" + site.call.text + "`",
                            site.location});
  }

  void scan_call_sites() {
    std::set<SourceLocation> decorator_sites;
    for (const auto& fn : model_.functions) {
      for (const auto& d : fn.decorators) decorator_sites.insert(d.location);
    }
    for (const CallSite* site : all_call_sites()) {
      const CallSite& cs = *site;
      if (decorator_sites.count(cs.location)) continue;
      std::string tail = tail_of(cs.callee_expression);
      const Expression* first = cs.arguments.empty() ? nullptr : &cs.arguments.front();
      auto handler_arg = [&]() -> const Expression* {
        if (first && first->is_string_literal() && cs.arguments.size() > 1) return &cs.arguments[1];
        if (first) return first;
        for (const auto& k : kHandlerKeywords) {
          if (auto e = keyword(cs.keyword_arguments, k)) return e;
        }
        return nullptr;
      };
      if (tail == "add_tool" || tail == "add_tool_handler" || tail == "register_tool") {
        auto pattern = tail == "register_tool" ? RegistrationPattern::RegisterApi
                                               : RegistrationPattern::AddToolApi;
        const Expression* h = handler_arg();
        if (h && h->kind == ExprKind::Call) continue;  // add_tool(Tool(...)) handled below
        auto handler = handler_of(h, cs);
        if (!handler) {
          unresolved(cs, tail);
          continue;
        }
        const FunctionDef* fn = resolver_.function(*handler);
        std::string name = fn->name;
        if (auto s = literal(keyword(cs.keyword_arguments, "name"))) {
          name = *s;
        } else if (cs.arguments.size() > 1) {
          if (auto s2 = literal(&cs.arguments[1])) name = *s2;
          if (auto s0 = literal(&cs.arguments[0])) name = *s0;
        }
        std::string desc = util::trim(fn->docstring);
        if (auto s = literal(keyword(cs.keyword_arguments, "description"))) desc = *s;
        add({name, *handler, pattern, cs.location, desc});
      } else if (tail == "Tool" || tail == "FunctionTool") {
        scan_tool_object(cs);
      }
    }
  }

  void scan_tool_object(const CallSite& cs) {
    const Expression* name_expr = keyword(cs.keyword_arguments, "name");
    if (!name_expr && !cs.arguments.empty()) name_expr = &cs.arguments.front();
    const Expression* handler_expr = nullptr;
    for (const auto& k : kHandlerKeywords) {
      if ((handler_expr = keyword(cs.keyword_arguments, k))) break;
    }
    if (!handler_expr && cs.arguments.size() > 1) handler_expr = &cs.arguments[1];
    std::string desc;
    if (auto s = literal(keyword(cs.keyword_arguments, "description"))) desc = *s;

    auto name = literal(name_expr);
    if (!handler_expr) {
      if (!name) {
        diagnostics_.push_back({DiagnosticKind::Ambiguity,
                                "tool object without literal name or handler `" + cs.call.text + "`",
                                cs.location});
        return;
      }
      pending_objects_.push_back({{*name, "", RegistrationPattern::ToolObject, cs.location, desc}, true});
      return;
    }
    auto handler = handler_of(handler_expr, cs);
    if (!handler) {
      unresolved(cs, "tool object");
      return;
    }
    const FunctionDef* fn = resolver_.function(*handler);
    if (desc.empty()) desc = util::trim(fn->docstring);
    if (!name) {
      diagnostics_.push_back({DiagnosticKind::Ambiguity,
                              "tool object name is not a literal; using handler name `" + fn->name + "`",
                              cs.location});
      name = fn->name;
    }
    add({*name, *handler, RegistrationPattern::ToolObject, cs.location, desc});
  }

  bool derives_from_tool_handler(const ClassDef& cls, int depth = 0) const {
    if (depth > 16) return false;
    for (const auto& base : cls.bases) {
      if (tail_of(base.dotted()) == "ToolHandler") return true;
    }
    for (const auto& base : resolver_.base_classes(cls)) {
      const ClassDef* b = model_.find_class(base);
      if (b && derives_from_tool_handler(*b, depth + 1)) return true;
    }
    return false;
  }

  std::optional<std::string> class_tool_name(const ClassDef& cls) const {
    for (const auto& s : cls.body) {
      if (s.kind != StatementKind::Assignment) continue;
      for (const auto& t : s.targets) {
        if (t.kind == ExprKind::Name && t.name == "name") {
          if (auto lit = literal(&s.expression)) return lit;
        }
      }
    }
    if (auto init = resolver_.find_method(cls.qualified_name, "__init__")) {
      const FunctionDef* fn = resolver_.function(*init);
      for (const auto& cs : fn->call_sites) {
        if (cs.callee_expression != "super().__init__" &&
            !util::ends_with(cs.callee_expression, ".__init__")) {
          continue;
        }
        if (!cs.arguments.empty()) {
          if (auto lit = literal(&cs.arguments.front())) return lit;
        }
        if (auto lit = literal(keyword(cs.keyword_arguments, "name"))) return lit;
      }
      // self.name = "..."
      std::optional<std::string> found;
      walk_statements(fn->body, [&](const Statement& s) {
        if (found || s.kind != StatementKind::Assignment) return;
        for (const auto& t : s.targets) {
          if (t.text == "self.name") {
            if (auto lit = literal(&s.expression)) found = lit;
          }
        }
      });
      if (found) return found;
    }
    return std::nullopt;
  }

  void scan_classes() {
    for (const auto& cls : model_.classes) {
      if (cls.name == "ToolHandler" || !derives_from_tool_handler(cls)) continue;
      std::optional<std::string> handler;
      for (const auto& m : kHandlerMethods) {
        if ((handler = resolver_.find_method(cls.qualified_name, m))) break;
      }
      if (!handler) {
        diagnostics_.push_back({DiagnosticKind::UnresolvedHandler,
                                "ToolHandler subclass `" + cls.name + "` has no handler method",
                                cls.location});
        continue;
      }
      std::string name = class_tool_name(cls).value_or(cls.name);
      std::string desc = util::trim(cls.docstring);
      add({name, *handler, RegistrationPattern::ToolHandlerSubclass, cls.location, desc});
    }
  }

  static bool contains_tool_object(const Expression& e) {
    bool found = false;
    walk(e, [&](const Expression& n) {
      if (n.kind == ExprKind::Call && tail_of(n.children.front().dotted()) == "Tool") found = true;
    });
    return found;
  }

  void scan_enumerations() {
    for (const auto& fn : model_.functions) {
      if (fn.name != "list_tools") continue;
      bool dispatcher_style = std::any_of(fn.decorators.begin(), fn.decorators.end(),
                                          [](const DecoratorRecord& d) {
                                            return tail_of(d.callee) == "list_tools";
                                          });
      std::vector<const Statement*> returns;
      walk_statements(fn.body, [&](const Statement& s) {
        if (s.kind == StatementKind::Return && s.has_expression) returns.push_back(&s);
      });
      bool complete = !returns.empty();
      for (const Statement* r : returns) {
        const Expression& v = r->expression;
        if (contains_tool_object(v)) continue;
        if (v.kind != ExprKind::List && v.kind != ExprKind::Tuple) {
          complete = false;
          continue;
        }
        for (const auto& elem : v.children) {
          auto handler = resolver_.resolve_reference(elem, fn.qualified_name, fn.file);
          if (!handler) {
            complete = false;
            continue;
          }
          const FunctionDef* h = resolver_.function(*handler);
          add({h->name, *handler, RegistrationPattern::RuntimeEnumeration, elem.location,
               util::trim(h->docstring)});
        }
      }
      if (!complete && !dispatcher_style) {
        diagnostics_.push_back({DiagnosticKind::Incompleteness,
                                "list_tools() result is not statically enumerable",
                                fn.location});
      }
    }
  }

  void attach_dispatch_objects() {
    if (dispatchers_.empty()) {
      for (const auto& p : pending_objects_) {
        diagnostics_.push_back({DiagnosticKind::UnresolvedHandler,
                                "tool `" + p.entry.tool_name + "` has no handler and no call_tool dispatcher",
                                p.entry.location});
      }
      return;
    }
    if (pending_objects_.empty()) {
      for (const auto& [fn, d] : dispatchers_) {
        std::string name = fn->name;
        if (!d->arguments.empty()) {
          if (auto s = literal(&d->arguments.front())) name = *s;
        }
        add({name, fn->qualified_name, RegistrationPattern::DecoratorBased, d->location,
             describe(*fn, d)});
      }
      return;
    }
    for (auto& p : pending_objects_) {
      const FunctionDef* target = dispatchers_.front().first;
      for (const auto& [fn, _] : dispatchers_) {
        if (fn->file == p.entry.location.file) {
          target = fn;
          break;
        }
      }
      p.entry.handler = target->qualified_name;
      candidates_.push_back(p);
    }
  }

  ToolExtraction finish() {
    ToolExtraction out;
    out.diagnostics = std::move(diagnostics_);
    std::map<std::string, std::size_t> by_handler;
    std::set<std::pair<std::string, std::string>> pairs;
    for (auto& c : candidates_) {
      if (!resolver_.function(c.entry.handler)) {
        out.diagnostics.push_back({DiagnosticKind::UnresolvedHandler,
                                   "handler not found: " + c.entry.handler, c.entry.location});
        continue;
      }
      if (c.dispatch_attached) {
        if (!pairs.insert({c.entry.tool_name, c.entry.handler}).second) continue;
        out.entries.push_back(c.entry);
        continue;
      }
      auto it = by_handler.find(c.entry.handler);
      if (it != by_handler.end()) {
        const ToolEntry& kept = out.entries[it->second];
        out.diagnostics.push_back(
            {DiagnosticKind::DuplicateRegistration,
             "handler " + c.entry.handler + " registered as " + to_string(kept.registration_pattern) +
                 " and " + to_string(c.entry.registration_pattern) + "; keeping `" +
                 kept.tool_name + "`",
             c.entry.location});
        continue;
      }
      if (!pairs.insert({c.entry.tool_name, c.entry.handler}).second) continue;
      by_handler.emplace(c.entry.handler, out.entries.size());
      out.entries.push_back(c.entry);
    }
    std::stable_sort(out.entries.begin(), out.entries.end(), [](const ToolEntry& a, const ToolEntry& b) {
      return std::tie(a.location, a.tool_name) < std::tie(b.location, b.tool_name);
    });
    return out;
  }

  const ProgramModel& model_;
  CallResolver resolver_;
  std::vector<Candidate> candidates_;
  std::vector<Candidate> pending_objects_;
  std::vector<std::pair<const FunctionDef*, const DecoratorRecord*>> dispatchers_;
  Diagnostics diagnostics_;
};

}  // namespace

ToolExtraction extract_tool_entries_with_diagnostics(const ProgramModel& model) {
  return Extractor(model).run();
}

std::vector<ToolEntry> extract_tool_entries(const ProgramModel& model) {
  return extract_tool_entries_with_diagnostics(model).entries;
}

}  // namespace mcpauth
