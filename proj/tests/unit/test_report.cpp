#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "mcpauth/report.hpp"
#include "support.hpp"

using namespace mcpauth;
using nlohmann::json;
using testing_support::analyze_fixture;
using testing_support::fixture;
using testing_support::tool_named;

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  CliResult r;
  std::string cmd = std::string("'") + MCPAUTH_CLI + "' " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

ProjectReport fake_report(const std::string& id, std::vector<Verdict> verdicts) {
  ProjectReport r;
  r.project_id = id;
  for (auto v : verdicts) {
    ToolReport t;
    t.tool.tool_name = "t" + std::to_string(r.tool_reports.size());
    t.classification.verdict = v;
    r.tool_reports.push_back(t);
  }
  return r;
}

}  // namespace

TEST(Report, GitWrapperSingleVulnerableTool) {
  ProjectReport r = analyze_fixture("reference/git_wrapper");
  ASSERT_EQ(r.tool_reports.size(), 1u);
  const ToolReport& t = r.tool_reports[0];
  EXPECT_EQ(t.tool.tool_name, "git_command");
  EXPECT_EQ(t.classification.verdict, Verdict::AuthNone);
  ASSERT_EQ(t.sensitive_operations.size(), 1u);
  EXPECT_EQ(t.sensitive_operations[0].matched_api, "subprocess.run");
  EXPECT_TRUE(t.sensitive_operations[0].input_dependent);
  EXPECT_EQ(r.vulnerable_tools(), 1u);
  EXPECT_EQ(r.analysis_duration_ms, 0);
}

TEST(Report, EmptyProject) {
  auto dir = fs::temp_directory_path() / "mcpauth-report-empty";
  fs::create_directories(dir);
  ProjectReport r = analyze_project(dir);
  EXPECT_TRUE(r.tool_reports.empty());
  EXPECT_FALSE(r.vulnerable());
  EXPECT_EQ(r.project_id, "mcpauth-report-empty");
  fs::remove_all(dir);
  EXPECT_THROW(analyze_project(dir), ProjectNotFound);
}

TEST(Report, SessionRegistrySecure) {
  ProjectReport r = analyze_fixture("reference/session_registry");
  const ToolReport* t = tool_named(r, "mcp_call");
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t->classification.verdict, Verdict::Secure);
  EXPECT_FALSE(r.vulnerable());
}

TEST(Report, JsonContents) {
  json j = to_json(analyze_fixture("reference/session_registry"));
  EXPECT_EQ(j["schema_version"], "1");
  EXPECT_EQ(j["project_id"], "session_registry");
  EXPECT_EQ(j["versions"]["tool"], kToolVersion);
  EXPECT_EQ(j["versions"]["sensitive_api_table"], SensitiveApiTable::builtin().hash());
  EXPECT_EQ(j["versions"]["identity_lexicon"], IdentityLexicon::builtin().hash());
  const json& tool = j["tools"][0];
  for (const char* key : {"tool_name", "handler", "registration_pattern", "location", "verdict", "vulnerable",
                          "unconfirmed", "rationale", "sensitive_operations", "auth_checks", "supporting_checks",
                          "unguarded_operations"}) {
    EXPECT_TRUE(tool.contains(key)) << key;
  }
  EXPECT_EQ(tool["verdict"], "Secure");
  EXPECT_EQ(j["summary"]["verdicts"]["Secure"], 1);
  EXPECT_EQ(j["summary"]["vulnerable_tools"], 0);
  for (const auto& idx : tool["supporting_checks"]) EXPECT_LT(idx.get<std::size_t>(), tool["auth_checks"].size());
}

TEST(Report, DeterministicOutputIsByteStable) {
  for (const char* f : {"reference/git_wrapper", "reference/session_registry", "auth_timing/subsequent_call"}) {
    EXPECT_EQ(emit(analyze_fixture(f), OutputFormat::Json), emit(analyze_fixture(f), OutputFormat::Json));
    EXPECT_EQ(emit(analyze_fixture(f), OutputFormat::Text), emit(analyze_fixture(f), OutputFormat::Text));
  }
}

TEST(Report, JsonRoundTrip) {
  for (const char* f : {"reference/git_wrapper", "reference/session_registry", "auth_timing/subsequent_call",
                        "classification/cachedstartup_persistentdata", "classification/runtimeunbound_systemexecution"}) {
    ProjectReport r = analyze_fixture(f);
    json j = to_json(r);
    EXPECT_EQ(to_json(report_from_json(j)), j) << f;
  }
  EXPECT_THROW(report_from_json(json{{"schema_version", "99"}}), ConfigError);
}

TEST(Report, TextMentionsEachTool) {
  std::string text = emit(analyze_fixture("auth_timing/subsequent_call"), OutputFormat::Text);
  EXPECT_NE(text.find("connect_workspace"), std::string::npos);
  EXPECT_NE(text.find("post_message"), std::string::npos);
  EXPECT_NE(text.find("AuthCache"), std::string::npos);
}

TEST(StarBuckets, LowerInclusiveBoundaries) {
  const std::vector<std::pair<std::int64_t, std::string>> cases = {
      {0, "0–50"},        {49, "0–50"},         {50, "50–100"},    {99, "50–100"},  {100, "100–500"},
      {499, "100–500"},   {500, "500–1000"},    {999, "500–1000"}, {1000, ">1000"}, {250000, ">1000"}};
  for (const auto& [stars, bucket] : cases) EXPECT_EQ(star_bucket(stars), bucket) << stars;
  EXPECT_EQ(star_buckets().size(), 5u);
}

TEST(Manifest, ParsingAndErrors) {
  auto m = parse_manifest(json::parse(R"([{"project_id":"a","path":"x/a","category":"Data","stars":3,"author":"z"}])"),
                          "/base");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].path, "/base/x/a");
  EXPECT_THROW(parse_manifest(json::parse(R"({"project_id":"a"})")), ConfigError);
  EXPECT_THROW(parse_manifest(json::parse(R"([{"path":"a"}])")), ConfigError);
  EXPECT_THROW(parse_manifest(json::parse(R"([{"project_id":"a"},{"project_id":"a"}])")), ConfigError);
  EXPECT_THROW(parse_manifest(json::parse(R"([{"project_id":"a","stars":-1}])")), ConfigError);
  EXPECT_THROW(load_manifest("/nonexistent/manifest.json"), ConfigError);
}

// Expected values come from the manifest itself plus the fixture verdicts
// recorded alongside the fixtures, not from the aggregator.
TEST(Corpus, EightProjectsHalfVulnerable) {
  auto manifest = load_manifest(fixture("corpus/manifest.json").string());
  ASSERT_EQ(manifest.size(), 8u);
  const std::map<std::string, bool> vulnerable = {
      {"shell-helper", true}, {"status-poller", true},  {"note-keeper", true},  {"git-runner", true},
      {"bound-shell", false}, {"bound-status", false},  {"bound-screen", false}, {"session-runner", false}};
  AnalysisOptions o;
  o.deterministic = true;
  CorpusRun run = run_corpus(manifest, o, 4);
  ASSERT_EQ(run.reports.size(), 8u);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    EXPECT_EQ(run.reports[i].project_id, manifest[i].project_id);
    EXPECT_EQ(run.reports[i].vulnerable(), vulnerable.at(manifest[i].project_id)) << manifest[i].project_id;
  }
  const CorpusSummary& s = run.summary;
  EXPECT_EQ(s.servers_total, 8);
  EXPECT_EQ(s.servers_vulnerable, 4);
  EXPECT_EQ(format_rate(s.server_rate()), "50.0%");

  std::map<std::string, std::int64_t> cat_total, cat_vuln, star_total, star_vuln, author_vuln;
  for (const auto& e : manifest) {
    ++cat_total[e.category];
    ++star_total[star_bucket(e.stars)];
    if (vulnerable.at(e.project_id)) {
      ++cat_vuln[e.category];
      ++star_vuln[star_bucket(e.stars)];
      ++author_vuln[e.author];
    }
  }
  for (const auto& [cat, n] : cat_total) {
    EXPECT_EQ(s.by_category.at(cat).total(), n) << cat;
    EXPECT_EQ(s.by_category.at(cat).vulnerable(), cat_vuln[cat]) << cat;
  }
  for (const auto& [bucket, n] : star_total) {
    EXPECT_EQ(s.by_star_range.at(bucket).total(), n) << bucket;
    EXPECT_EQ(s.by_star_range.at(bucket).vulnerable(), star_vuln[bucket]) << bucket;
  }
  EXPECT_EQ(s.vulnerable_servers_by_author, author_vuln);

  // Marginals agree with the totals.
  VerdictCounts by_cat, by_star;
  for (const auto& [_, c] : s.by_category) by_cat += c;
  for (const auto& [_, c] : s.by_star_range) by_star += c;
  EXPECT_EQ(by_cat, s.totals);
  EXPECT_EQ(by_star, s.totals);

  EXPECT_EQ(s.vulnerable_capabilities,
            (std::map<std::string, std::int64_t>{{"SystemExecution", 2}, {"NetworkCommunication", 1}, {"PersistentData", 1}}));

  CorpusSummary serial = run_corpus(manifest, o, 1).summary;
  EXPECT_EQ(to_json(serial), to_json(s));
  EXPECT_EQ(to_json(summary_from_json(to_json(s))), to_json(s));
}

TEST(Corpus, EmptySummaryRateIsNotAvailable) {
  CorpusSummary s = aggregate_corpus({}, {});
  EXPECT_EQ(s.servers_total, 0);
  EXPECT_FALSE(s.server_rate().has_value());
  EXPECT_EQ(format_rate(s.server_rate()), "n/a");
  EXPECT_EQ(to_json(s)["server_vulnerability_rate"], "n/a");
}

TEST(Corpus, UnknownProjectGoesToOther) {
  std::vector<ManifestEntry> manifest = {{"known", "/x", "Data", 70, "a"}};
  CorpusSummary s = aggregate_corpus(manifest, {fake_report("known", {Verdict::Secure}),
                                                fake_report("stray", {Verdict::AuthNone, Verdict::Secure})});
  EXPECT_EQ(s.by_category.at("Other").total(), 2);
  EXPECT_EQ(s.by_star_range.at("unknown").total(), 2);
  ASSERT_EQ(s.diagnostics.size(), 1u);
  EXPECT_EQ(s.diagnostics[0].kind, DiagnosticKind::UnknownProject);
  EXPECT_EQ(format_rate(s.server_rate()), "50.0%");
  EXPECT_THROW(aggregate_corpus(manifest, {fake_report("known", {}), fake_report("known", {})}), InconsistentInput);
}

TEST(Corpus, ExemptNoSensitiveServers) {
  std::vector<ProjectReport> reports = {fake_report("a", {Verdict::AuthCache}), fake_report("b", {Verdict::NoSensitiveOps}),
                                        fake_report("c", {Verdict::Secure, Verdict::NoSensitiveOps})};
  CorpusSummary plain = aggregate_corpus({}, reports, false);
  CorpusSummary exempt = aggregate_corpus({}, reports, true);
  EXPECT_EQ(format_rate(plain.server_rate()), "33.3%");
  EXPECT_EQ(exempt.servers_exempt, 1);
  EXPECT_EQ(format_rate(exempt.server_rate()), "50.0%");
  EXPECT_EQ(format_rate(exempt.tool_rate()), "50.0%");
  EXPECT_EQ(format_rate(plain.tool_rate()), "25.0%");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("analyze " + q(fixture("reference/git_wrapper"))).status, 1);
  EXPECT_EQ(run_cli("analyze " + q(fixture("reference/session_registry"))).status, 0);
  EXPECT_EQ(run_cli("analyze /nonexistent/project").status, 2);
  EXPECT_EQ(run_cli("analyze").status, 2);
  EXPECT_EQ(run_cli("analyze --format yaml " + q(fixture("reference/git_wrapper"))).status, 2);
  EXPECT_EQ(run_cli("corpus " + q(fixture("corpus/manifest.json"))).status, 1);
}

TEST(Cli, JsonOutputMatchesLibrary) {
  auto r = run_cli("analyze --format json --deterministic " + q(fixture("reference/git_wrapper")));
  ASSERT_EQ(r.status, 1);
  EXPECT_EQ(json::parse(r.out), to_json(analyze_fixture("reference/git_wrapper")));
}

TEST(Cli, RefusesRemoteEndpoint) {
  auto dir = fs::temp_directory_path() / "mcpauth-cli-refuse";
  fs::create_directories(dir);
  std::ofstream(dir / "launch.json") << R"({"transport":"sse","url":"http://203.0.113.9:8000/sse"})";
  EXPECT_EQ(run_cli("validate " + q(dir / "launch.json")).status, 2);
  fs::remove_all(dir);
}
