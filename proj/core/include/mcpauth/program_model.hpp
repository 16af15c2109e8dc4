#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mcpauth/common.hpp"

namespace mcpauth {

// Language-agnostic program representation. Front-ends normalize the
// analyzed language's syntax into these types; nothing downstream looks at
// raw syntax.

enum class ExprKind {
  Name,
  Attribute,  // children[0] = receiver, name = attribute
  Call,       // children[0] = callee, children[1..] = positional args
  Literal,
  List,
  Tuple,
  Set,
  Dict,  // children alternate key, value; a "**x" entry has a Starred key
  BinaryOp,
  UnaryOp,
  BoolOp,
  Compare,  // children = operands, ops = operators between them
  Subscript,  // children[0] = value, children[1] = index
  Slice,
  Lambda,  // parameters = names, children[0] = body
  Conditional,  // children = body, test, orelse
  Comprehension,  // name = list|set|dict|gen; children = element(s); generators
  ComprehensionFor,  // children[0] = target, children[1] = iter, rest = ifs
  Starred,
  FormattedString,  // children = replacement fields
  Await,
  Yield,
  NamedExpr,  // children[0] = target, children[1] = value
};

enum class LiteralKind { None, String, Bytes, Number, Bool, NoneValue, Ellipsis };

struct Expression {
  ExprKind kind = ExprKind::Name;
  std::string text;  // verbatim source
  std::string name;  // identifier, attribute, operator or literal value
  LiteralKind literal = LiteralKind::None;
  std::vector<Expression> children;
  std::vector<std::pair<std::string, Expression>> keywords;
  std::vector<Expression> generators;
  std::vector<std::string> parameters;
  std::vector<std::string> ops;
  SourceLocation location;

  /// Dotted path for Name/Attribute chains ("subprocess.run"); for other
  /// receivers the callee form is used ("Path().write_text").
  std::string dotted() const;
  bool is_string_literal() const {
    return kind == ExprKind::Literal && literal == LiteralKind::String;
  }
};

enum class StatementKind { Assignment, Call, Return, Conditional, Raise, Loop, With, Other };

const char* to_string(StatementKind kind);

inline constexpr const char* kModuleScope = "<module>";

struct CallSite {
  std::string callee_expression;
  Expression call;  // the full Call expression
  std::vector<Expression> arguments;
  std::map<std::string, Expression> keyword_arguments;
  std::string enclosing_function;  // qualified name or "<file>::<module>"
  SourceLocation location;
};

struct Statement {
  StatementKind kind = StatementKind::Other;
  std::string keyword;  // source keyword: "if", "assert", "try", "import", "def", ...
  std::vector<Expression> targets;
  Expression expression;
  bool has_expression = false;
  SourceLocation location;
  std::vector<Statement> children;     // if/loop/with/try body
  std::vector<Statement> alternative;  // else / elif / except / finally
  // Conditional only.
  std::string predicate_text;
  std::vector<std::string> predicate_identifiers;
  // Names declared by `global`/`nonlocal` or defined by `def`/`class`.
  std::vector<std::string> names;
  // Calls appearing in this statement's own expressions (not in children).
  std::vector<CallSite> calls;
};

struct Parameter {
  std::string name;
  int position = 0;
  bool variadic = false;  // *args / **kwargs
  bool keyword_only = false;
};

struct DecoratorRecord {
  std::string expression;  // verbatim text without the '@'
  std::string callee;      // dotted callee ("mcp.tool")
  bool is_call = false;
  std::vector<Expression> arguments;
  std::map<std::string, Expression> keyword_arguments;
  SourceLocation location;
};

struct FunctionDef {
  std::string qualified_name;  // "<file>::<scope.chain.name>"
  std::string name;
  std::string file;
  std::string scope;           // enclosing scope chain, "" at module level
  std::string enclosing_class; // qualified class name when a method
  std::vector<Parameter> parameters;
  std::vector<DecoratorRecord> decorators;
  std::vector<Statement> body;
  std::vector<CallSite> call_sites;  // flattened, excluding nested defs
  std::string docstring;
  bool is_async = false;
  SourceLocation location;
  int end_line = 0;

  const Parameter* parameter(std::string_view name) const;
  bool is_method() const { return !enclosing_class.empty(); }
};

struct ClassDef {
  std::string qualified_name;
  std::string name;
  std::string file;
  std::vector<Expression> bases;
  std::vector<DecoratorRecord> decorators;
  std::vector<Statement> body;  // class-level statements other than defs
  std::vector<std::string> methods;  // qualified names
  std::string docstring;
  SourceLocation location;
};

struct ImportRecord {
  std::string alias;   // local binding
  std::string target;  // absolute dotted path ("subprocess", "pkg.tools.run_query")
  bool from_import = false;
  SourceLocation location;
};

struct SourceFile {
  std::string path;    // project-relative, '/' separated
  std::string module;  // dotted module name
  std::string content;
  std::vector<ImportRecord> imports;
  std::vector<CallSite> module_call_sites;
};

struct ProgramModel {
  std::string project_id;
  std::vector<SourceFile> source_files;
  std::vector<FunctionDef> functions;  // ordered by (file, line)
  std::vector<ClassDef> classes;
  std::vector<Statement> module_statements;
  Diagnostics diagnostics;

  const FunctionDef* find_function(std::string_view qualified_name) const;
  const ClassDef* find_class(std::string_view qualified_name) const;
  const SourceFile* find_file(std::string_view path) const;
  /// Innermost function whose definition encloses the location.
  const FunctionDef* enclosing_function(const SourceLocation& loc) const;
};

/// A front-end turns one source file into the shared representation.
class FrontEnd {
 public:
  virtual ~FrontEnd() = default;
  virtual bool accepts(const std::filesystem::path& file) const = 0;
  /// Parses `content` and appends to `model`. Throws on syntax errors; the
  /// model is left untouched in that case.
  virtual void parse_file(const std::string& relative_path, const std::string& content,
                          ProgramModel& model) const = 0;
};

std::unique_ptr<FrontEnd> make_python_front_end();

/// Walks `project_root`, parsing every file some front-end accepts.
/// Unparseable files become SkippedFile diagnostics.
ProgramModel parse_source(const std::filesystem::path& project_root);
ProgramModel parse_source(const std::filesystem::path& project_root, const FrontEnd& front_end);

/// Parses in-memory files; keys are project-relative paths.
ProgramModel parse_sources(const std::map<std::string, std::string>& files,
                           std::string project_id = "memory");

/// Visits every expression node depth-first (pre-order).
template <typename Fn>
void walk(const Expression& expr, Fn&& fn) {
  fn(expr);
  for (const auto& child : expr.children) walk(child, fn);
  for (const auto& [_, value] : expr.keywords) walk(value, fn);
  for (const auto& gen : expr.generators) walk(gen, fn);
}

template <typename Fn>
void walk_statements(const std::vector<Statement>& stmts, Fn&& fn) {
  for (const auto& s : stmts) {
    fn(s);
    walk_statements(s.children, fn);
    walk_statements(s.alternative, fn);
  }
}

}  // namespace mcpauth
