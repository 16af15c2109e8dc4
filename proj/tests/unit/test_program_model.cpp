#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "mcpauth/program_model.hpp"
#include "support.hpp"

using namespace mcpauth;
using testing_support::fixture;
using testing_support::model_of;

namespace fs = std::filesystem;

namespace {

const char* kGitHelper = R"(import subprocess
from typing import List


def _run_git_command(repo_path: str, command: List[str]) -> str:
    full_command = ["git"] + command
    result = subprocess.run(
        full_command, cwd=repo_path,
        check=True, capture_output=True,  text=True)
    return result.stdout
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> fixture_projects() {
  std::vector<fs::path> out;
  for (const auto& group : {"registration", "classification", "reference", "auth_timing"}) {
    for (const auto& e : fs::directory_iterator(fixture(group))) {
      if (e.is_directory()) out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string first_token(const std::string& text) {
  static const std::regex tok(R"(^(?:[rbfuRBFU]{0,2}["']|[A-Za-z_][A-Za-z_0-9]*|\d+|\*\*|\S))");
  std::smatch m;
  if (std::regex_search(text, m, tok)) return m.str();
  return text;
}

std::string text_at(const std::vector<std::string>& lines, const SourceLocation& loc) {
  if (loc.line < 1 || loc.line > static_cast<int>(lines.size())) return {};
  const std::string& line = lines[static_cast<std::size_t>(loc.line - 1)];
  if (loc.column < 1 || loc.column > static_cast<int>(line.size()) + 1) return {};
  return line.substr(static_cast<std::size_t>(loc.column - 1));
}

}  // namespace

TEST(ParseSource, EmptyDirectoryYieldsEmptyModel) {
  auto dir = fs::temp_directory_path() / "mcpauth-empty-project";
  fs::create_directories(dir);
  ProgramModel m = parse_source(dir);
  EXPECT_EQ(m.functions.size(), 0u);
  EXPECT_EQ(m.module_statements.size(), 0u);
  EXPECT_TRUE(m.diagnostics.empty());
  fs::remove_all(dir);
}

TEST(ParseSource, MissingProjectThrows) {
  EXPECT_THROW(parse_source("/nonexistent/mcpauth/project"), ProjectNotFound);
}

TEST(ParseSource, GitHelperHasOneFunctionWithSubprocessCall) {
  ProgramModel m = model_of({{"git.py", kGitHelper}});
  ASSERT_EQ(m.functions.size(), 1u);
  const FunctionDef& f = m.functions[0];
  EXPECT_EQ(f.name, "_run_git_command");
  EXPECT_EQ(f.qualified_name, "git.py::_run_git_command");
  ASSERT_EQ(f.parameters.size(), 2u);
  EXPECT_EQ(f.parameters[0].name, "repo_path");
  EXPECT_EQ(f.parameters[1].name, "command");
  const CallSite* run = nullptr;
  for (const auto& cs : f.call_sites) {
    if (cs.callee_expression == "subprocess.run") run = &cs;
  }
  ASSERT_NE(run, nullptr);
  std::set<std::string> kw;
  for (const auto& [k, _] : run->keyword_arguments) kw.insert(k);
  EXPECT_EQ(kw, (std::set<std::string>{"cwd", "check", "capture_output", "text"}));
  EXPECT_EQ(run->location, (SourceLocation{"git.py", 7, 14}));
  EXPECT_EQ(run->enclosing_function, "git.py::_run_git_command");
}

TEST(ParseSource, ModuleAssignmentOnly) {
  ProgramModel m = model_of({{"a.py", "x = 1\n"}});
  EXPECT_EQ(m.functions.size(), 0u);
  ASSERT_EQ(m.module_statements.size(), 1u);
  EXPECT_EQ(m.module_statements[0].kind, StatementKind::Assignment);
  EXPECT_EQ(m.module_statements[0].location, (SourceLocation{"a.py", 1, 1}));
}

TEST(ParseSource, UnparseableFileBecomesDiagnostic) {
  ProgramModel m = model_of({{"bad.py", "def broken(:\n    pass\n"}, {"ok.py", "def fine():\n    return 1\n"}});
  ASSERT_EQ(m.functions.size(), 1u);
  EXPECT_EQ(m.functions[0].qualified_name, "ok.py::fine");
  ASSERT_EQ(m.diagnostics.size(), 1u);
  EXPECT_EQ(m.diagnostics[0].kind, DiagnosticKind::SkippedFile);
}

TEST(ParseSource, ConditionalRecordsPredicateTextAndIdentifiers) {
  ProgramModel m = model_of({{"g.py", "def f(session_id):\n    if session_id not in SESSIONS:\n        raise PermissionError('x')\n"}});
  ASSERT_EQ(m.functions.size(), 1u);
  const Statement& s = m.functions[0].body.at(0);
  EXPECT_EQ(s.kind, StatementKind::Conditional);
  EXPECT_EQ(s.predicate_text, "session_id not in SESSIONS");
  EXPECT_EQ(std::set<std::string>(s.predicate_identifiers.begin(), s.predicate_identifiers.end()),
            (std::set<std::string>{"session_id", "SESSIONS"}));
  ASSERT_EQ(s.children.size(), 1u);
  EXPECT_EQ(s.children[0].kind, StatementKind::Raise);
}

TEST(ParseSource, QualifiedNamesAreUniqueAndOrdered) {
  ProgramModel m = model_of({{"b.py", "class K:\n    def m(self):\n        def inner():\n            pass\n        return inner\n"
                                      "def m():\n    pass\n"},
                             {"a.py", "def z():\n    pass\n"}});
  std::vector<std::string> names;
  for (const auto& f : m.functions) names.push_back(f.qualified_name);
  EXPECT_EQ(names, (std::vector<std::string>{"a.py::z", "b.py::K.m", "b.py::K.m.inner", "b.py::m"}));
}

TEST(ParseSource, DecoratorsAreRecordedVerbatim) {
  ProgramModel m = model_of({{"s.py", "@app.get('/x', operation_id = \"get_x\")\n@mcp.tool\ndef h():\n    pass\n"}});
  ASSERT_EQ(m.functions.size(), 1u);
  const auto& d = m.functions[0].decorators;
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].expression, "app.get('/x', operation_id = \"get_x\")");
  EXPECT_EQ(d[0].callee, "app.get");
  EXPECT_TRUE(d[0].is_call);
  EXPECT_EQ(d[0].keyword_arguments.count("operation_id"), 1u);
  EXPECT_EQ(d[1].expression, "mcp.tool");
  EXPECT_FALSE(d[1].is_call);
}

TEST(ParseSource, DeterministicForSameBytes) {
  auto a = parse_source(fixture("reference/session_registry"));
  auto b = parse_source(fixture("reference/session_registry"));
  ASSERT_EQ(a.functions.size(), b.functions.size());
  for (std::size_t i = 0; i < a.functions.size(); ++i) {
    EXPECT_EQ(a.functions[i].qualified_name, b.functions[i].qualified_name);
    EXPECT_EQ(a.functions[i].location, b.functions[i].location);
    EXPECT_EQ(a.functions[i].call_sites.size(), b.functions[i].call_sites.size());
  }
}

// Every recorded location, sliced out of the file, starts with the first
// token of the expression recorded there.
TEST(ParseSource, LocationFidelityOnFixtures) {
  std::size_t checked = 0;
  for (const auto& project : fixture_projects()) {
    ProgramModel m = parse_source(project);
    std::map<std::string, std::vector<std::string>> lines;
    for (const auto& f : m.source_files) {
      std::istringstream in(f.content);
      std::string l;
      while (std::getline(in, l)) lines[f.path].push_back(l);
    }
    auto check_expr = [&](const Expression& e) {
      walk(e, [&](const Expression& n) {
        if (n.text.empty() || n.location.file.empty()) return;
        std::string at = text_at(lines[n.location.file], n.location);
        std::string tok = first_token(n.text);
        EXPECT_EQ(at.substr(0, tok.size()), tok) << n.location.str() << " expected " << n.text;
        ++checked;
      });
    };
    auto visit = [&](const std::vector<Statement>& body) {
      walk_statements(body, [&](const Statement& s) {
        std::string at = text_at(lines[s.location.file], s.location);
        EXPECT_FALSE(at.empty()) << s.location.str();
        if (s.has_expression) check_expr(s.expression);
        for (const auto& t : s.targets) check_expr(t);
        for (const auto& c : s.calls) {
          std::string cat = text_at(lines[c.location.file], c.location);
          EXPECT_EQ(cat.substr(0, first_token(c.callee_expression).size()), first_token(c.callee_expression))
              << c.location.str();
        }
      });
    };
    visit(m.module_statements);
    for (const auto& f : m.functions) {
      visit(f.body);
      std::string at = text_at(lines[f.file], f.location);
      EXPECT_TRUE(at.rfind("def", 0) == 0 || at.rfind("async", 0) == 0) << f.location.str();
    }
  }
  EXPECT_GT(checked, 500u);
}

// Naive oracle: one function per `def` keyword at line start.
TEST(ParseSource, FunctionCountMatchesRegexScan) {
  static const std::regex def_line(R"(^\s*(async\s+)?def\s+[A-Za-z_]\w*\s*\()");
  for (const auto& project : fixture_projects()) {
    std::size_t expected = 0;
    for (const auto& e : fs::recursive_directory_iterator(project)) {
      if (e.path().extension() != ".py") continue;
      std::istringstream in(slurp(e.path()));
      std::string line;
      while (std::getline(in, line)) expected += std::regex_search(line, def_line) ? 1 : 0;
    }
    EXPECT_EQ(parse_source(project).functions.size(), expected) << project;
  }
}

// Reformatting whitespace must not change the function set.
TEST(ParseSource, ReformattedSourceKeepsFunctionSet) {
  for (const auto& project : fixture_projects()) {
    ProgramModel original = parse_source(project);
    std::map<std::string, std::string> reformatted;
    for (const auto& f : original.source_files) {
      std::string out;
      std::istringstream in(f.content);
      std::string line;
      while (std::getline(in, line)) {
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\r\n\n";
      }
      reformatted[f.path] = out;
    }
    ProgramModel again = parse_sources(reformatted, original.project_id);
    std::set<std::string> a, b;
    for (const auto& f : original.functions) a.insert(f.qualified_name);
    for (const auto& f : again.functions) b.insert(f.qualified_name);
    EXPECT_EQ(a, b) << project;
    EXPECT_TRUE(again.diagnostics.empty()) << project;
  }
}

TEST(ParseSource, ParsesAssortedSyntax) {
  const char* src = R"(import os, sys as system
from .pkg import (a, b as c)
X: int = 3
Y = lambda q, *r, k=1, **kw: (q, r, k, kw)

@decorator(arg=[i for i in range(3) if i])
async def coro(a, /, b=2, *args, c, d: "str" = f"{X!r:>{3}}", **kwargs) -> dict[str, int]:
    async with ctx() as (p, q), other:
        await p.send(b"bytes" "more")
    async for item in gen():
        yield item
    try:
        pass
    except* ValueError as e:
        raise RuntimeError() from e
    else:
        return {**kwargs, "k": [*args]}
    finally:
        del a
    match b:
        case {"x": 1, **rest} if rest:
            pass
        case Point(x=0) | [1, 2, *_]:
            pass
    global X
    x = y if (z := 3) else ~w ** -2
    print(*args, sep="", **kwargs)

class C(Base, metaclass=Meta):
    attr = 1
    def m(self): return self.attr @ self.attr
)";
  ProgramModel m = model_of({{"syn.py", src}});
  EXPECT_TRUE(m.diagnostics.empty()) << (m.diagnostics.empty() ? "" : m.diagnostics[0].message);
  EXPECT_EQ(m.functions.size(), 2u);
  EXPECT_EQ(m.classes.size(), 1u);
}
