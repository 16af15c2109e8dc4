#include <gtest/gtest.h>

#include "mcpauth/sensitive_ops.hpp"
#include "support.hpp"

using namespace mcpauth;
using testing_support::fixture;
using testing_support::Files;
using testing_support::Pipeline;

namespace {

const char* kHeader = "from mcp.server.fastmcp import FastMCP\nmcp = FastMCP(\"x\")\n";

std::vector<SensitiveOperation> ops_of(const Pipeline& p, const std::string& tool) {
  CallResolver r(p.model);
  ToolContext ctx = construct_tool_context(p.tool(tool), p.graph, r);
  return identify_sensitive_operations(ctx, p.graph, p.model);
}

}  // namespace

TEST(SensitiveOps, GitWrapperSubprocessRun) {
  ProgramModel m = parse_source(fixture("reference/git_wrapper"));
  CallGraph g = build_call_graph(m);
  auto tools = extract_tool_entries(m);
  ASSERT_EQ(tools.size(), 1u);
  ContextMap cm = construct_context_map(m, tools, g);
  auto ops = identify_sensitive_operations(cm.entries[0], g, m);
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0].category, ResourceCategory::SystemExecution);
  EXPECT_EQ(ops[0].subcategory, "System Execution");
  EXPECT_EQ(ops[0].matched_api, "subprocess.run");
  EXPECT_EQ(ops[0].function(), "server.py::_run_git_command");
  EXPECT_EQ(ops[0].via_path, (std::vector<std::string>{"server.py::git_command", "server.py::_run_git_command"}));
  EXPECT_TRUE(ops[0].input_dependent);
}

TEST(SensitiveOps, PureArithmeticHasNone) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + "@mcp.tool()\ndef add(a: int, b: int) -> int:\n    return a + b\n"}});
  EXPECT_TRUE(ops_of(p, "add").empty());
}

TEST(SensitiveOps, LogWriteRefinedThroughHelper) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + R"(
def save_log(line):
    with open("audit.log", "a") as fh:
        fh.write(line)

@mcp.tool()
def handler(msg: str) -> str:
    save_log(msg)
    return "ok"
)"}});
  auto ops = ops_of(p, "handler");
  ASSERT_FALSE(ops.empty());
  const SensitiveOperation& op = ops[0];
  EXPECT_EQ(op.category, ResourceCategory::PersistentData);
  EXPECT_EQ(op.subcategory, "Logs and Persistent State");
  EXPECT_EQ(op.via_path, (std::vector<std::string>{"s.py::handler", "s.py::save_log"}));
}

TEST(SensitiveOps, OneOperationPerCategory) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + R"(import subprocess
import requests
import pyautogui

@mcp.tool()
def t_exec(cmd: str) -> str:
    return subprocess.check_output(["echo", cmd], text=True)

@mcp.tool()
def t_file(text: str) -> str:
    with open("notes.txt", "w") as fh:
        fh.write(text)
    return "saved"

@mcp.tool()
def t_net(url: str) -> int:
    return requests.get(url).status_code

@mcp.tool()
def t_screen() -> str:
    return str(pyautogui.screenshot().size)
)"}});
  std::map<std::string, ResourceCategory> expected = {{"t_exec", ResourceCategory::SystemExecution},
                                                      {"t_file", ResourceCategory::PersistentData},
                                                      {"t_net", ResourceCategory::NetworkCommunication},
                                                      {"t_screen", ResourceCategory::PhysicalInterface}};
  int correct = 0;
  for (const auto& [tool, cat] : expected) {
    auto ops = ops_of(p, tool);
    ASSERT_FALSE(ops.empty()) << tool;
    bool ok = true;
    for (const auto& op : ops) ok = ok && op.category == cat;
    correct += ok ? 1 : 0;
  }
  EXPECT_EQ(correct, 4);
}

TEST(SensitiveOps, ReachedTransitively) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + R"(import os

def c(x):
    os.system(x)

def b(x):
    c(x)

@mcp.tool()
def a(x: str) -> None:
    b(x)
)"}});
  auto ops = ops_of(p, "a");
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0].via_path, (std::vector<std::string>{"s.py::a", "s.py::b", "s.py::c"}));
  EXPECT_TRUE(ops[0].input_dependent);
}

TEST(SensitiveOps, MatchedApiIsVerbatimAndAliasResolved) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + R"(import subprocess as sp

@mcp.tool()
def run(cmd: str) -> str:
    return sp.run(["echo", cmd], capture_output=True).stdout
)"}});
  auto ops = ops_of(p, "run");
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0].matched_api, "sp.run");
  EXPECT_EQ(ops[0].resolved_api, "subprocess.run");
  EXPECT_EQ(ops[0].category, ResourceCategory::SystemExecution);
  const SourceFile* f = p.model.find_file("s.py");
  ASSERT_NE(f, nullptr);
  std::vector<std::string> lines;
  std::istringstream in(f->content);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  const std::string& line = lines.at(static_cast<std::size_t>(ops[0].location.line - 1));
  EXPECT_EQ(line.substr(static_cast<std::size_t>(ops[0].location.column - 1), ops[0].matched_api.size()),
            ops[0].matched_api);
}

TEST(SensitiveOps, ReceiverTypedByConstructor) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + R"(import httpx

@mcp.tool()
def call(url: str) -> int:
    client = httpx.Client()
    return client.get(url).status_code
)"}});
  auto ops = ops_of(p, "call");
  bool session = false;
  for (const auto& op : ops) session = session || op.subcategory == "Authenticated Sessions";
  EXPECT_TRUE(session);
}

TEST(SensitiveApiTable, BuiltinIsWellFormed) {
  const auto& t = SensitiveApiTable::builtin();
  EXPECT_GT(t.patterns().size(), 200u);
  EXPECT_EQ(t.hash().size(), 64u);
  std::set<ResourceCategory> cats;
  for (const auto& row : t.patterns()) {
    cats.insert(row.category);
    const auto& subs = subcategories(row.category);
    EXPECT_NE(std::find(subs.begin(), subs.end(), row.subcategory), subs.end()) << row.pattern;
  }
  EXPECT_EQ(cats.size(), 4u);
  for (auto c : cats)
    for (const auto& sub : subcategories(c)) {
      bool covered = false;
      for (const auto& row : t.patterns()) covered = covered || (row.category == c && row.subcategory == sub);
      EXPECT_TRUE(covered) << sub;
    }
}

TEST(SensitiveApiTable, ParseErrors) {
  EXPECT_THROW(SensitiveApiTable::parse("os.system\tSystemExecution\n"), ConfigError);
  EXPECT_THROW(SensitiveApiTable::parse("os.system\tNotACategory\tSystem Execution\n"), ConfigError);
  EXPECT_THROW(SensitiveApiTable::parse("os.system\tSystemExecution\tAudio Capture\n"), ConfigError);
  EXPECT_THROW(SensitiveApiTable::load("/nonexistent/table.tsv"), ConfigError);
  EXPECT_NO_THROW(SensitiveApiTable::parse("# only a comment\n\n"));
}

TEST(SensitiveApiTable, LongestPatternWinsAndTiesKeepFirst) {
  auto t = SensitiveApiTable::parse(
      "subprocess.*\tSystemExecution\tSystem Execution\n"
      "subprocess.Popen().kill\tSystemExecution\tProcess Management\n"
      "foo.bar\tNetworkCommunication\tData Transfer\n"
      "foo.ba*\tPersistentData\tFile Read / Write\n");
  ASSERT_NE(t.match("subprocess.run"), nullptr);
  EXPECT_EQ(t.match("subprocess.run")->subcategory, "System Execution");
  EXPECT_EQ(t.match("subprocess.Popen().kill")->subcategory, "Process Management");
  EXPECT_EQ(t.match("foo.bar")->category, ResourceCategory::NetworkCommunication);
  EXPECT_EQ(t.match("unrelated.call"), nullptr);
}

TEST(SensitiveApiTable, DotBoundarySuffixMatching) {
  EXPECT_TRUE(api_pattern_matches("Path().write_text", "pathlib.Path().write_text"));
  EXPECT_FALSE(api_pattern_matches("Path().write_text", "pathlib.MyPath().write_text"));
  EXPECT_TRUE(api_pattern_matches("os.exec*", "os.execvp"));
  EXPECT_FALSE(api_pattern_matches("eval", "literal_eval"));
  EXPECT_FALSE(api_pattern_matches("eval", "ast.literal_eval"));
}

TEST(SensitiveOps, CustomTableChangesResult) {
  Pipeline p(Files{{"s.py", std::string(kHeader) + "import mylib\n@mcp.tool()\ndef go(x: str):\n    mylib.launch(x)\n"}});
  EXPECT_TRUE(ops_of(p, "go").empty());
  auto table = SensitiveApiTable::parse("mylib.launch\tSystemExecution\tSystem Execution\n");
  CallResolver r(p.model);
  ToolContext ctx = construct_tool_context(p.tool("go"), p.graph, r);
  auto ops = identify_sensitive_operations(ctx, p.graph, r, table);
  ASSERT_EQ(ops.size(), 1u);
  EXPECT_EQ(ops[0].pattern, "mylib.launch");
}

TEST(SensitiveOps, ShortestCallPath) {
  CallGraph g;
  g.add_edge("a", "b");
  g.add_edge("b", "d");
  g.add_edge("a", "c");
  g.add_edge("c", "e");
  g.add_edge("e", "d");
  std::set<std::string> all{"a", "b", "c", "d", "e"};
  EXPECT_EQ(shortest_call_path("a", "d", g, all), (std::vector<std::string>{"a", "b", "d"}));
  EXPECT_EQ(shortest_call_path("a", "d", g, {"a", "c", "d", "e"}), (std::vector<std::string>{"a", "c", "e", "d"}));
  EXPECT_TRUE(shortest_call_path("d", "a", g, all).empty());
}
