// mcp-authscan: static authorization audit of MCP server sources.
//
//   mcp-authscan analyze <project> [--format json|text] [--dynamic]
//   mcp-authscan validate <launch.json> [--tool NAME]...
//   mcp-authscan corpus <manifest.json> [--jobs N]
//
// Exit status: 0 no vulnerable verdicts, 1 vulnerable verdicts, 2 error.

#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "mcpauth/report.hpp"

namespace {

constexpr int kExitClean = 0;
constexpr int kExitVulnerable = 1;
constexpr int kExitError = 2;

struct Settings {
  std::string format = "text";
  bool dynamic = false;
  double timeout_s = 15.0;
  double handshake_s = 10.0;
  double budget_s = 120.0;
  unsigned jobs = 0;
  std::string api_table;
  std::string lexicon;
  std::vector<std::string> allow_endpoints;
  bool deterministic = false;
  bool exempt_no_sensitive = false;
  std::string output;
  std::string descriptor;
  std::vector<std::string> tools;
};

void add_common(CLI::App* cmd, Settings& s) {
  cmd->add_option("--format", s.format, "Output format")->check(CLI::IsMember({"json", "text"}));
  cmd->add_option("--api-table", s.api_table, "Sensitive API table (TSV)")->check(CLI::ExistingFile);
  cmd->add_option("--lexicon", s.lexicon, "Caller-identity lexicon")->check(CLI::ExistingFile);
  cmd->add_flag("--deterministic", s.deterministic, "Omit wall-clock fields");
  cmd->add_option("-o,--output", s.output, "Write the report to a file");
}

void add_dynamic(CLI::App* cmd, Settings& s) {
  cmd->add_option("--timeout", s.timeout_s, "Per-probe deadline in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--handshake-timeout", s.handshake_s, "Initialize deadline in seconds")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--budget", s.budget_s, "Per-server validation budget in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--allow-endpoint", s.allow_endpoints,
                  "Permit probing this URL (repeatable); other remote endpoints are refused");
}

std::chrono::milliseconds seconds(double s) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000.0));
}

struct LoadedConfig {
  std::optional<mcpauth::SensitiveApiTable> table;
  std::optional<mcpauth::IdentityLexicon> lexicon;
};

mcpauth::AnalysisOptions make_options(const Settings& s, LoadedConfig& cfg) {
  mcpauth::AnalysisOptions o;
  if (!s.api_table.empty()) {
    cfg.table = mcpauth::SensitiveApiTable::load(s.api_table);
    o.api_table = &*cfg.table;
  }
  if (!s.lexicon.empty()) {
    cfg.lexicon = mcpauth::IdentityLexicon::load(s.lexicon);
    o.lexicon = &*cfg.lexicon;
  }
  o.dynamic = s.dynamic;
  o.deterministic = s.deterministic;
  o.launch_descriptor = s.descriptor;
  o.validator.probe_timeout = seconds(s.timeout_s);
  o.validator.handshake_timeout = seconds(s.handshake_s);
  o.validator.server_budget = seconds(s.budget_s);
  o.validator.allowed_endpoints = s.allow_endpoints;
  return o;
}

void write_out(const Settings& s, const std::string& text) {
  if (s.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(s.output, std::ios::binary);
  if (!out) throw mcpauth::ConfigError("cannot write " + s.output);
  out << text;
}

mcpauth::OutputFormat format_of(const Settings& s) {
  return s.format == "json" ? mcpauth::OutputFormat::Json : mcpauth::OutputFormat::Text;
}

int run_analyze(const std::string& path, const Settings& s) {
  LoadedConfig cfg;
  auto report = mcpauth::analyze_project(path, make_options(s, cfg));
  write_out(s, mcpauth::emit(report, format_of(s)));
  return report.vulnerable() ? kExitVulnerable : kExitClean;
}

int run_validate(const std::string& descriptor_path, const Settings& s) {
  LoadedConfig cfg;
  auto options = make_options(s, cfg);
  auto descriptor = mcpauth::LaunchDescriptor::load(descriptor_path);
  auto v = mcpauth::validate_server(descriptor, s.tools, options.validator);

  nlohmann::json j = {{"schema_version", mcpauth::kSchemaVersion},
                      {"endpoint", v.endpoint},
                      {"negotiated_protocol_version", v.negotiated_protocol_version}};
  nlohmann::json tools = nlohmann::json::array();
  for (const auto& t : v.advertised) tools.push_back(t.name);
  j["advertised_tools"] = tools;
  nlohmann::json results = nlohmann::json::object();
  for (const auto& [name, outcomes] : v.outcomes) {
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& o : outcomes) {
      auto pj = mcpauth::to_json(o);
      if (s.deterministic) pj.erase("elapsed_ms");
      probes.push_back(pj);
    }
    results[name] = {{"enforcement", mcpauth::to_string(v.enforcement.at(name))}, {"probes", probes}};
  }
  j["tools"] = results;
  nlohmann::json diags = nlohmann::json::array();
  for (const auto& d : v.diagnostics) diags.push_back({{"kind", mcpauth::to_string(d.kind)}, {"message", d.message}});
  j["diagnostics"] = diags;
  if (!s.deterministic) {
    nlohmann::json traffic = nlohmann::json::array();
    for (const auto& t : v.traffic) {
      traffic.push_back({{"direction", mcpauth::to_string(t.direction)}, {"raw", t.raw}, {"t_ms", t.timestamp_ms}});
    }
    j["traffic"] = traffic;
  }

  if (format_of(s) == mcpauth::OutputFormat::Json) {
    write_out(s, j.dump(2) + "\n");
  } else {
    std::string text = "endpoint: " + v.endpoint + "\nprotocol: " + v.negotiated_protocol_version + "\n";
    for (const auto& [name, e] : v.enforcement) text += "  " + name + ": " + mcpauth::to_string(e) + "\n";
    for (const auto& d : v.diagnostics) text += "[" + std::string(mcpauth::to_string(d.kind)) + "] " + d.message + "\n";
    write_out(s, text);
  }
  if (!v.diagnostics.empty() && v.outcomes.empty()) return kExitError;
  for (const auto& [_, e] : v.enforcement) {
    if (e == mcpauth::Enforcement::NotEnforced) return kExitVulnerable;
  }
  return kExitClean;
}

int run_corpus(const std::string& manifest_path, const Settings& s) {
  LoadedConfig cfg;
  auto manifest = mcpauth::load_manifest(manifest_path);
  unsigned jobs = s.jobs ? s.jobs : std::max(1u, std::thread::hardware_concurrency());
  auto run = mcpauth::run_corpus(manifest, make_options(s, cfg), jobs, s.exempt_no_sensitive);
  write_out(s, mcpauth::emit(run.summary, format_of(s)));
  return run.summary.servers_vulnerable > 0 ? kExitVulnerable : kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit MCP server sources for caller identity confusion"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mcpauth::kToolVersion));

  Settings s;
  std::string target;

  auto* analyze = app.add_subcommand("analyze", "Analyze one project directory");
  analyze->add_option("path", target, "Project root")->required();
  add_common(analyze, s);
  add_dynamic(analyze, s);
  analyze->add_flag("--dynamic", s.dynamic, "Probe unconfirmed tools on a launched server");
  analyze->add_option("--launch", s.descriptor, "Launch descriptor (default <path>/mcpauth-launch.json)");

  auto* validate = app.add_subcommand("validate", "Probe a server described by a launch descriptor");
  validate->add_option("descriptor", target, "Launch descriptor JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("--tool", s.tools, "Tool to probe (repeatable; default all advertised)");
  add_common(validate, s);
  add_dynamic(validate, s);

  auto* corpus = app.add_subcommand("corpus", "Analyze and aggregate a manifest of projects");
  corpus->add_option("manifest", target, "Manifest JSON")->required()->check(CLI::ExistingFile);
  corpus->add_option("-j,--jobs", s.jobs, "Worker count (default: hardware threads)");
  corpus->add_flag("--exempt-no-sensitive", s.exempt_no_sensitive,
                   "Exclude NoSensitiveOps tools from rate denominators");
  corpus->add_flag("--dynamic", s.dynamic, "Probe unconfirmed tools where a launch descriptor exists");
  add_common(corpus, s);
  add_dynamic(corpus, s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (analyze->parsed()) return run_analyze(target, s);
    if (validate->parsed()) return run_validate(target, s);
    return run_corpus(target, s);
  } catch (const mcpauth::EndpointNotAllowed& e) {
    std::cerr << "refused: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kExitError;
}
