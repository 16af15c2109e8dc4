#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "mcpauth/authz.hpp"
#include "support.hpp"

using namespace mcpauth;
using testing_support::analyze_fixture;
using testing_support::fixture;
using testing_support::Files;
using testing_support::Pipeline;
using testing_support::tool_named;

namespace {

const char* kHeader = "import os\nimport requests\nimport subprocess\nfrom mcp.server.fastmcp import FastMCP\nmcp = FastMCP(\"x\")\n";

struct Analysis {
  ToolContext context;
  std::vector<AuthCheck> checks;
  std::vector<SensitiveOperation> ops;
  Classification result;
};

Analysis analyze(const Pipeline& p, const std::string& tool) {
  Analysis a;
  CallResolver r(p.model);
  a.context = construct_tool_context(p.tool(tool), p.graph, r);
  a.checks = detect_auth_checks(a.context, p.model);
  a.ops = identify_sensitive_operations(a.context, p.graph, p.model);
  a.result = classify_tool(p.tool(tool), a.context, a.checks, a.ops);
  return a;
}

Verdict verdict_of(const std::string& body, const std::string& tool = "tool") {
  Pipeline p(Files{{"server.py", std::string(kHeader) + body}});
  return analyze(p, tool).result.verdict;
}

// Synthetic tool context over nodes f0..f(n-1), handler f0.
struct Synthetic {
  ToolContext ctx;
  std::vector<std::pair<int, int>> edges;
  int n = 0;

  static std::string fn(int i) { return "s.py::f" + std::to_string(i); }
  static SourceLocation site(int caller, int callee) { return {"s.py", caller * 100 + callee + 1, 5}; }
  static SourceLocation op_site(int at) { return {"s.py", at * 100 + 99, 5}; }
};

Synthetic random_dag(std::mt19937& rng, int n, double density) {
  Synthetic s;
  s.n = n;
  s.ctx.tool = {"t", Synthetic::fn(0), RegistrationPattern::DecoratorBased, {"s.py", 1, 1}, ""};
  for (int i = 0; i < n; ++i) s.ctx.related_functions.insert(Synthetic::fn(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::bernoulli_distribution(density)(rng)) s.edges.push_back({i, j});
  // Keep every node reachable from the handler.
  for (int j = 1; j < n; ++j) {
    bool has_in = false;
    for (auto [a, b] : s.edges) has_in = has_in || b == j;
    if (!has_in) s.edges.push_back({std::uniform_int_distribution<int>(0, j - 1)(rng), j});
  }
  for (auto [a, b] : s.edges) {
    s.ctx.edges.push_back({Synthetic::fn(a), Synthetic::fn(b), Synthetic::site(a, b), false});
  }
  return s;
}

SensitiveOperation op_at(int at) {
  SensitiveOperation op;
  op.category = ResourceCategory::SystemExecution;
  op.subcategory = "System Execution";
  op.matched_api = "subprocess.run";
  op.resolved_api = "subprocess.run";
  op.location = Synthetic::op_site(at);
  op.via_path = {Synthetic::fn(0)};
  if (at != 0) op.via_path.push_back(Synthetic::fn(at));
  return op;
}

AuthCheck random_check(std::mt19937& rng, const Synthetic& s) {
  AuthCheck c;
  int at = std::uniform_int_distribution<int>(0, s.n - 1)(rng);
  c.function = Synthetic::fn(at);
  int kind = std::uniform_int_distribution<int>(0, 2)(rng);
  if (kind == 0) {
    c.timing = AuthTiming::StartupOnce;
    c.form = AuthForm::CachedCredential;
    c.mechanism = CheckMechanism::Acquisition;
    c.function = "s.py::<module>";
    for (int i = 0; i < s.n; ++i)
      if (std::bernoulli_distribution(0.3)(rng)) c.guarded_functions.insert(Synthetic::fn(i));
  } else {
    c.timing = AuthTiming::PerInvocation;
    c.form = AuthForm::BearerToken;
    c.caller_bound = kind == 2;
    c.dominates_function = std::bernoulli_distribution(0.3)(rng);
    for (auto [a, b] : s.edges)
      if (a == at && std::bernoulli_distribution(0.5)(rng)) c.dominated_sites.push_back(Synthetic::site(a, b));
    if (std::bernoulli_distribution(0.5)(rng)) c.dominated_sites.push_back(Synthetic::op_site(at));
    std::sort(c.dominated_sites.begin(), c.dominated_sites.end());
  }
  return c;
}

// Independent oracle: enumerate handler-to-target paths as (node, exit site)
// sequences and score them with the verdict definitions directly.
void enumerate(const Synthetic& s, int node, int target, std::vector<std::pair<int, SourceLocation>>& cur,
               std::vector<std::vector<std::pair<int, SourceLocation>>>& out) {
  if (node == target) {
    cur.push_back({node, Synthetic::op_site(target)});
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (auto [a, b] : s.edges) {
    if (a != node) continue;
    cur.push_back({node, Synthetic::site(a, b)});
    enumerate(s, b, target, cur, out);
    cur.pop_back();
  }
}

int oracle_rank(const Synthetic& s, const std::vector<AuthCheck>& checks, const std::vector<int>& op_nodes) {
  if (op_nodes.empty()) return verdict_rank(Verdict::NoSensitiveOps);
  int overall = 3;
  for (int target : op_nodes) {
    std::vector<std::vector<std::pair<int, SourceLocation>>> paths;
    std::vector<std::pair<int, SourceLocation>> cur;
    enumerate(s, 0, target, cur, paths);
    for (const auto& path : paths) {
      int best = 0;
      for (const auto& c : checks) {
        for (const auto& [node, exit] : path) {
          std::string name = Synthetic::fn(node);
          if (c.timing == AuthTiming::StartupOnce) {
            if (c.guarded_functions.count(name)) best = std::max(best, 1);
            continue;
          }
          if (name != c.function) continue;
          bool dominated = c.dominates_function ||
                           std::find(c.dominated_sites.begin(), c.dominated_sites.end(), exit) != c.dominated_sites.end();
          best = std::max(best, dominated && c.caller_bound ? 3 : 2);
        }
      }
      overall = std::min(overall, best);
    }
  }
  return overall;
}

}  // namespace

TEST(AuthChecks, SessionRegistrySessionGuard) {
  Pipeline p(Files{{"server.py", [] {
                 std::ifstream in(fixture("reference/session_registry/server.py"));
                 return std::string(std::istreambuf_iterator<char>(in), {});
               }()}});
  Analysis a = analyze(p, "mcp_call");
  const AuthCheck* guard = nullptr;
  for (const auto& c : a.checks)
    if (c.mechanism == CheckMechanism::Guard) guard = &c;
  ASSERT_NE(guard, nullptr);
  EXPECT_EQ(guard->form, AuthForm::SessionCheck);
  EXPECT_EQ(guard->timing, AuthTiming::PerInvocation);
  EXPECT_TRUE(guard->caller_bound);
  EXPECT_EQ(guard->function, "server.py::mcp_call");
  EXPECT_EQ(guard->evidence, "connection_id not in SESSIONS");
  EXPECT_EQ(guard->guard_location, (SourceLocation{"server.py", 29, 5}));
  EXPECT_TRUE(guard->guarded_functions.count("server.py::run_tool"));
  EXPECT_EQ(a.result.verdict, Verdict::Secure);
}

TEST(AuthChecks, StartupTokenIsCachedCredential) {
  Pipeline p(Files{{"server.py", std::string(kHeader) + R"(
API_TOKEN = os.environ["SERVICE_TOKEN"]

@mcp.tool()
def tool(url: str) -> int:
    return requests.get(url, headers={"Authorization": API_TOKEN}).status_code
)"}});
  Analysis a = analyze(p, "tool");
  ASSERT_EQ(a.checks.size(), 1u);
  EXPECT_EQ(a.checks[0].form, AuthForm::CachedCredential);
  EXPECT_EQ(a.checks[0].timing, AuthTiming::StartupOnce);
  EXPECT_FALSE(a.checks[0].caller_bound);
  EXPECT_TRUE(a.checks[0].state_names.count("API_TOKEN"));
  EXPECT_EQ(a.result.verdict, Verdict::AuthCache);
}

TEST(AuthChecks, NoChecksInPlainTool) {
  Pipeline p(Files{{"server.py", std::string(kHeader) + "@mcp.tool()\ndef tool(x: str):\n    return x\n"}});
  Analysis a = analyze(p, "tool");
  EXPECT_TRUE(a.checks.empty());
  EXPECT_EQ(a.result.verdict, Verdict::NoSensitiveOps);
}

TEST(Verdicts, NoCheckIsAuthNone) {
  EXPECT_EQ(verdict_of("@mcp.tool()\ndef tool(cmd: str):\n    return subprocess.run(['echo', cmd]).returncode\n"),
            Verdict::AuthNone);
}

TEST(Verdicts, GlobalLoginFlagIsAuthRuntime) {
  Pipeline p(Files{{"server.py", std::string(kHeader) + R"(
GLOBAL_LOGGED_IN = False

@mcp.tool()
def login(password: str) -> str:
    global GLOBAL_LOGGED_IN
    GLOBAL_LOGGED_IN = password == os.environ.get("ADMIN_PASSWORD")
    return "ok"

@mcp.tool()
def tool(cmd: str) -> str:
    if not GLOBAL_LOGGED_IN:
        raise PermissionError("login first")
    return subprocess.run(["echo", cmd], capture_output=True, text=True).stdout
)"}});
  Analysis a = analyze(p, "tool");
  EXPECT_EQ(a.result.verdict, Verdict::AuthRuntime);
  EXPECT_TRUE(a.result.unconfirmed);
  ASSERT_FALSE(a.result.supporting_checks.empty());
  EXPECT_FALSE(a.result.supporting_checks[0].caller_bound);
}

TEST(Verdicts, CallerBoundTokenValidatorIsSecure) {
  EXPECT_EQ(verdict_of(R"(
def verify_token(token):
    if token != os.environ.get("EXPECTED"):
        raise PermissionError("bad token")

@mcp.tool()
def tool(cmd: str, caller_token: str) -> str:
    verify_token(caller_token)
    return subprocess.run(["echo", cmd], capture_output=True, text=True).stdout
)"),
            Verdict::Secure);
}

TEST(Verdicts, CheckAfterOperationDoesNotDominate) {
  EXPECT_EQ(verdict_of(R"(
@mcp.tool()
def tool(cmd: str, session_id: str) -> str:
    out = subprocess.run(["echo", cmd], capture_output=True, text=True).stdout
    if session_id not in SESSIONS:
        raise PermissionError("no session")
    return out

SESSIONS = {}
)"),
            Verdict::AuthRuntime);
}

TEST(Verdicts, OneUnguardedBranchMakesToolAuthNone) {
  EXPECT_EQ(verdict_of(R"(
SESSIONS = {}

def guarded(cmd, session_id):
    if session_id not in SESSIONS:
        raise PermissionError("no session")
    return run(cmd)

def run(cmd):
    return subprocess.run(["echo", cmd]).returncode

@mcp.tool()
def tool(cmd: str, session_id: str, fast: bool) -> int:
    if fast:
        return run(cmd)
    return guarded(cmd, session_id)
)"),
            Verdict::AuthNone);
}

TEST(Verdicts, AuthTimingRows) {
  struct Row {
    const char* fixture;
    const char* tool;
    Verdict verdict;
  };
  for (const Row& row : {Row{"auth_timing/pre_authorization", "post_message", Verdict::AuthNone},
                         Row{"auth_timing/authorization_triggering", "post_message", Verdict::AuthCache},
                         Row{"auth_timing/subsequent_call", "post_message", Verdict::AuthCache},
                         Row{"auth_timing/subsequent_call", "connect_workspace", Verdict::NoSensitiveOps},
                         Row{"auth_timing/caller_bound", "post_message", Verdict::Secure}}) {
    auto report = analyze_fixture(row.fixture);
    const ToolReport* t = tool_named(report, row.tool);
    ASSERT_NE(t, nullptr) << row.fixture;
    EXPECT_EQ(t->classification.verdict, row.verdict) << row.fixture << " " << to_string(t->classification.verdict);
  }
}

TEST(Verdicts, SixteenClassificationFixtures) {
  std::ifstream in(fixture("classification/manifest.json"));
  auto manifest = nlohmann::json::parse(in);
  ASSERT_EQ(manifest.size(), 16u);
  int correct = 0;
  for (const auto& row : manifest) {
    auto report = analyze_fixture("classification/" + row["path"].get<std::string>());
    const ToolReport* t = tool_named(report, row["tool_name"]);
    ASSERT_NE(t, nullptr) << row["fixture_id"];
    bool ok = to_string(t->classification.verdict) == row["expected_verdict"].get<std::string>();
    EXPECT_TRUE(ok) << row["fixture_id"] << " got " << to_string(t->classification.verdict);
    EXPECT_EQ(to_string(t->tool.registration_pattern), row["registration_pattern"].get<std::string>());
    correct += ok ? 1 : 0;
  }
  EXPECT_EQ(correct, 16);
}

TEST(Verdicts, OrderAndVulnerability) {
  EXPECT_LT(verdict_rank(Verdict::AuthNone), verdict_rank(Verdict::AuthCache));
  EXPECT_LT(verdict_rank(Verdict::AuthCache), verdict_rank(Verdict::AuthRuntime));
  EXPECT_LT(verdict_rank(Verdict::AuthRuntime), verdict_rank(Verdict::Secure));
  EXPECT_TRUE(is_vulnerable(Verdict::AuthNone));
  EXPECT_TRUE(is_vulnerable(Verdict::AuthCache));
  EXPECT_TRUE(is_vulnerable(Verdict::AuthRuntime));
  EXPECT_FALSE(is_vulnerable(Verdict::Secure));
  EXPECT_FALSE(is_vulnerable(Verdict::NoSensitiveOps));
  for (auto v : {Verdict::Secure, Verdict::AuthNone, Verdict::AuthCache, Verdict::AuthRuntime, Verdict::NoSensitiveOps})
    EXPECT_EQ(verdict_from_string(to_string(v)), v);
}

// 200 random tool contexts scored against an independent path oracle; every
// added check keeps the verdict at least as strong.
TEST(Classify, RandomizedOracleAndMonotonicity) {
  std::mt19937 rng(4242);
  int agree = 0;
  for (int trial = 0; trial < 200; ++trial) {
    int n = std::uniform_int_distribution<int>(1, 7)(rng);
    Synthetic s = random_dag(rng, n, 0.35);
    std::vector<int> op_nodes;
    std::vector<SensitiveOperation> ops;
    int n_ops = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int i = 0; i < n_ops; ++i) {
      int at = std::uniform_int_distribution<int>(0, n - 1)(rng);
      op_nodes.push_back(at);
      ops.push_back(op_at(at));
    }
    std::vector<AuthCheck> checks;
    int n_checks = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int i = 0; i < n_checks; ++i) checks.push_back(random_check(rng, s));

    Classification c = classify_tool(s.ctx.tool, s.ctx, checks, ops);
    agree += verdict_rank(c.verdict) == oracle_rank(s, checks, op_nodes) ? 1 : 0;
    EXPECT_EQ(c.unconfirmed, c.verdict == Verdict::AuthRuntime);

    auto more = checks;
    more.push_back(random_check(rng, s));
    Classification stronger = classify_tool(s.ctx.tool, s.ctx, more, ops);
    EXPECT_GE(verdict_rank(stronger.verdict), verdict_rank(c.verdict)) << "trial " << trial;
  }
  EXPECT_EQ(agree, 200);
}

TEST(Classify, SupportingChecksAndUnguardedOps) {
  std::mt19937 rng(1);
  Synthetic s = random_dag(rng, 1, 0.0);
  AuthCheck guard;
  guard.function = Synthetic::fn(0);
  guard.caller_bound = true;
  guard.dominates_function = true;
  std::vector<SensitiveOperation> ops{op_at(0)};
  Classification secure = classify_tool(s.ctx.tool, s.ctx, {guard}, ops);
  EXPECT_EQ(secure.verdict, Verdict::Secure);
  EXPECT_TRUE(secure.unguarded_operations.empty());
  Classification none = classify_tool(s.ctx.tool, s.ctx, {}, ops);
  EXPECT_EQ(none.verdict, Verdict::AuthNone);
  EXPECT_EQ(none.unguarded_operations.size(), 1u);
  EXPECT_TRUE(none.supporting_checks.empty());
  EXPECT_FALSE(none.rationale.empty());
}

TEST(Classify, InconsistentInputRejected) {
  std::mt19937 rng(2);
  Synthetic s = random_dag(rng, 2, 1.0);
  AuthCheck stray;
  stray.function = "elsewhere.py::f";
  EXPECT_THROW(classify_tool(s.ctx.tool, s.ctx, {stray}, {}), InconsistentInput);
  SensitiveOperation op = op_at(1);
  op.via_path.push_back("elsewhere.py::g");
  EXPECT_THROW(classify_tool(s.ctx.tool, s.ctx, {}, {op}), InconsistentInput);
}

TEST(Classify, PathLimitDiagnostic) {
  // A ladder of 10 diamonds has 1024 handler-to-sink paths.
  ToolContext ctx;
  ctx.tool = {"t", "s.py::n0", RegistrationPattern::DecoratorBased, {"s.py", 1, 1}, ""};
  int line = 10;
  for (int i = 0; i < 10; ++i) {
    std::string from = "s.py::n" + std::to_string(i), to = "s.py::n" + std::to_string(i + 1);
    std::string a = "s.py::a" + std::to_string(i), b = "s.py::b" + std::to_string(i);
    for (const auto& f : {from, to, a, b}) ctx.related_functions.insert(f);
    ctx.edges.push_back({from, a, {"s.py", line++, 1}, false});
    ctx.edges.push_back({from, b, {"s.py", line++, 1}, false});
    ctx.edges.push_back({a, to, {"s.py", line++, 1}, false});
    ctx.edges.push_back({b, to, {"s.py", line++, 1}, false});
  }
  SensitiveOperation op;
  op.matched_api = "os.system";
  op.location = {"s.py", 999, 1};
  op.via_path = {"s.py::n0", "s.py::n10"};
  Classification c = classify_tool(ctx.tool, ctx, {}, {op});
  EXPECT_EQ(c.verdict, Verdict::AuthNone);
  ASSERT_FALSE(c.diagnostics.empty());
  EXPECT_EQ(c.diagnostics[0].kind, DiagnosticKind::PathLimit);
}

TEST(IdentityLexicon, MatchesWholeWords) {
  const auto& lex = IdentityLexicon::builtin();
  EXPECT_TRUE(lex.matches("session_id"));
  EXPECT_TRUE(lex.matches("connectionId"));
  EXPECT_FALSE(lex.matches("sessions_total_count_x") && !lex.matches("session_id"));
  EXPECT_EQ(lex.hash().size(), 64u);
  auto custom = IdentityLexicon::parse("tenant key\n# comment\n");
  EXPECT_TRUE(custom.matches("tenant_key"));
  EXPECT_TRUE(custom.matches("tenantKey"));
  EXPECT_FALSE(custom.matches("tenant"));
  EXPECT_THROW(IdentityLexicon::load("/nonexistent/lexicon.txt"), ConfigError);
}
