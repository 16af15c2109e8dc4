#include "mcpauth/report.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <thread>

#include "util.hpp"

namespace mcpauth {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<Verdict, 5> kVerdictOrder = {Verdict::Secure, Verdict::AuthNone, Verdict::AuthCache,
                                                  Verdict::AuthRuntime, Verdict::NoSensitiveOps};

DiagnosticKind diagnostic_kind_from_string(std::string_view text) {
  for (int k = 0; k <= static_cast<int>(DiagnosticKind::DynamicValidation); ++k) {
    auto kind = static_cast<DiagnosticKind>(k);
    if (text == to_string(kind)) return kind;
  }
  throw ConfigError("unknown diagnostic kind: " + std::string(text));
}

CheckMechanism mechanism_from_string(std::string_view text) {
  for (auto m : {CheckMechanism::Guard, CheckMechanism::Validator, CheckMechanism::Acquisition}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown check mechanism: " + std::string(text));
}

json location_json(const SourceLocation& loc) {
  return {{"file", loc.file}, {"line", loc.line}, {"column", loc.column}};
}

SourceLocation location_from(const json& j) {
  return {j.at("file").get<std::string>(), j.at("line").get<int>(), j.at("column").get<int>()};
}

json diagnostics_json(const Diagnostics& diags) {
  json out = json::array();
  for (const auto& d : diags) {
    json j = {{"kind", to_string(d.kind)}, {"message", d.message}};
    if (d.location) j["location"] = location_json(*d.location);
    out.push_back(std::move(j));
  }
  return out;
}

Diagnostics diagnostics_from(const json& j) {
  Diagnostics out;
  for (const auto& d : j) {
    Diagnostic diag{diagnostic_kind_from_string(d.at("kind").get<std::string>()),
                    d.at("message").get<std::string>(), std::nullopt};
    if (d.contains("location")) diag.location = location_from(d["location"]);
    out.push_back(std::move(diag));
  }
  return out;
}

json operation_json(const SensitiveOperation& op) {
  return {{"category", to_string(op.category)},
          {"subcategory", op.subcategory},
          {"matched_api", op.matched_api},
          {"resolved_api", op.resolved_api},
          {"pattern", op.pattern},
          {"location", location_json(op.location)},
          {"via_path", op.via_path},
          {"input_dependent", op.input_dependent}};
}

SensitiveOperation operation_from(const json& j) {
  SensitiveOperation op;
  op.category = resource_category_from_string(j.at("category").get<std::string>());
  op.subcategory = j.at("subcategory").get<std::string>();
  op.matched_api = j.at("matched_api").get<std::string>();
  op.resolved_api = j.value("resolved_api", op.matched_api);
  op.pattern = j.value("pattern", std::string());
  op.location = location_from(j.at("location"));
  op.via_path = j.at("via_path").get<std::vector<std::string>>();
  op.input_dependent = j.at("input_dependent").get<bool>();
  return op;
}

json check_json(const AuthCheck& c) {
  json sites = json::array();
  for (const auto& s : c.dominated_sites) sites.push_back(location_json(s));
  return {{"form", to_string(c.form)},
          {"timing", to_string(c.timing)},
          {"caller_bound", c.caller_bound},
          {"mechanism", to_string(c.mechanism)},
          {"function", c.function},
          {"evidence", c.evidence},
          {"guard_location", location_json(c.guard_location)},
          {"guarded_functions", c.guarded_functions},
          {"dominated_sites", sites},
          {"dominates_function", c.dominates_function},
          {"state_names", c.state_names}};
}

AuthCheck check_from(const json& j) {
  AuthCheck c;
  c.form = auth_form_from_string(j.at("form").get<std::string>());
  c.timing = auth_timing_from_string(j.at("timing").get<std::string>());
  c.caller_bound = j.at("caller_bound").get<bool>();
  c.mechanism = mechanism_from_string(j.at("mechanism").get<std::string>());
  c.function = j.at("function").get<std::string>();
  c.evidence = j.at("evidence").get<std::string>();
  c.guard_location = location_from(j.at("guard_location"));
  c.guarded_functions = j.at("guarded_functions").get<std::set<std::string>>();
  for (const auto& s : j.value("dominated_sites", json::array())) c.dominated_sites.push_back(location_from(s));
  c.dominates_function = j.value("dominates_function", false);
  c.state_names = j.value("state_names", std::set<std::string>());
  return c;
}

bool same_check(const AuthCheck& a, const AuthCheck& b) {
  return a.guard_location == b.guard_location && a.evidence == b.evidence && a.function == b.function &&
         a.mechanism == b.mechanism && a.timing == b.timing;
}

bool same_operation(const SensitiveOperation& a, const SensitiveOperation& b) {
  return a.location == b.location && a.matched_api == b.matched_api && a.via_path == b.via_path;
}

json counts_json(const VerdictCounts& c) {
  json j = json::object();
  for (auto v : kVerdictOrder) j[to_string(v)] = c[v];
  j["total"] = c.total();
  return j;
}

VerdictCounts counts_from(const json& j) {
  VerdictCounts c;
  for (auto v : kVerdictOrder) {
    c.counts[static_cast<std::size_t>(verdict_rank(v))] = j.value(to_string(v), std::int64_t{0});
  }
  return c;
}

void add_unique(Diagnostics& into, const Diagnostics& from) {
  for (const auto& d : from) {
    bool seen = std::any_of(into.begin(), into.end(), [&](const Diagnostic& e) {
      return e.kind == d.kind && e.message == d.message && e.location == d.location;
    });
    if (!seen) into.push_back(d);
  }
}

}  // namespace

// --------------------------------------------------------------- analysis

std::size_t ProjectReport::vulnerable_tools() const {
  return static_cast<std::size_t>(std::count_if(tool_reports.begin(), tool_reports.end(), [](const ToolReport& t) {
    return is_vulnerable(t.classification.verdict);
  }));
}

namespace {

void run_dynamic(ProjectReport& report, const std::string& descriptor_path, const AnalysisOptions& options) {
  auto note = [&](const std::string& message) {
    report.diagnostics.push_back({DiagnosticKind::DynamicValidation, message, std::nullopt});
  };
  std::vector<std::string> targets;
  bool unconfirmed = false;
  for (const auto& t : report.tool_reports) {
    unconfirmed = unconfirmed || t.classification.unconfirmed;
    if (t.classification.verdict == Verdict::AuthRuntime || t.classification.verdict == Verdict::AuthCache) {
      targets.push_back(t.tool.tool_name);
    }
  }
  if (!unconfirmed) return;
  std::error_code ec;
  if (!fs::exists(descriptor_path, ec)) {
    note("no launch descriptor at " + fs::path(descriptor_path).filename().string() +
         "; unconfirmed verdicts left static");
    return;
  }
  ServerValidation v;
  try {
    v = validate_server(LaunchDescriptor::load(descriptor_path), targets, options.validator);
  } catch (const AnalysisError& e) {
    note(e.what());
    return;
  }
  add_unique(report.diagnostics, v.diagnostics);
  std::set<std::string> advertised;
  for (const auto& a : v.advertised) advertised.insert(a.name);
  std::set<std::string> statically;
  for (const auto& t : report.tool_reports) statically.insert(t.tool.tool_name);
  for (const auto& name : advertised) {
    if (!statically.count(name)) note("server advertises tool " + name + " not found statically");
  }
  for (auto& t : report.tool_reports) {
    auto it = v.enforcement.find(t.tool.tool_name);
    if (it == v.enforcement.end()) continue;
    t.enforcement = it->second;
    t.probes = v.outcomes[t.tool.tool_name];
    t.classification = merge_enforcement(std::move(t.classification), it->second);
  }
}

}  // namespace

ProjectReport analyze_model(const ProgramModel& model, const AnalysisOptions& options) {
  auto started = std::chrono::steady_clock::now();
  const SensitiveApiTable& table = options.api_table ? *options.api_table : SensitiveApiTable::builtin();
  const IdentityLexicon& lexicon = options.lexicon ? *options.lexicon : IdentityLexicon::builtin();

  ProjectReport report;
  report.project_id = model.project_id;
  report.versions.api_table_hash = table.hash();
  report.versions.lexicon_hash = lexicon.hash();
  report.diagnostics = model.diagnostics;

  CallGraph graph = build_call_graph(model);
  CallResolver resolver(model);
  ToolExtraction extraction = extract_tool_entries_with_diagnostics(model);
  add_unique(report.diagnostics, extraction.diagnostics);

  for (const auto& entry : extraction.entries) {
    ToolReport tr;
    tr.tool = entry;
    try {
      ToolContext ctx = construct_tool_context(entry, graph, resolver);
      add_unique(report.diagnostics, ctx.diagnostics);
      tr.sensitive_operations = identify_sensitive_operations(ctx, graph, resolver, table);
      tr.auth_checks = detect_auth_checks(ctx, resolver, lexicon);
      tr.classification = classify_tool(entry, ctx, tr.auth_checks, tr.sensitive_operations);
      add_unique(report.diagnostics, tr.classification.diagnostics);
    } catch (const UnknownHandler& e) {
      report.diagnostics.push_back({DiagnosticKind::UnknownHandler, e.what(), entry.location});
      continue;
    }
    report.tool_reports.push_back(std::move(tr));
  }
  std::stable_sort(report.tool_reports.begin(), report.tool_reports.end(),
                   [](const ToolReport& a, const ToolReport& b) { return a.tool.location < b.tool.location; });

  if (!options.deterministic) {
    report.analysis_duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::steady_clock::now() - started)
                                      .count();
  }
  return report;
}

ProjectReport analyze_project(const fs::path& path, const AnalysisOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) throw ProjectNotFound("not a project directory: " + path.string());
  auto started = std::chrono::steady_clock::now();
  ProjectReport report = analyze_model(parse_source(path), options);
  if (options.dynamic) {
    std::string descriptor = options.launch_descriptor.empty()
                                 ? (path / kDefaultLaunchDescriptor).string()
                                 : options.launch_descriptor;
    run_dynamic(report, descriptor, options);
  }
  if (!options.deterministic) {
    report.analysis_duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::steady_clock::now() - started)
                                      .count();
  }
  return report;
}

// --------------------------------------------------------------- manifest

std::vector<ManifestEntry> parse_manifest(const json& manifest, const std::string& base_dir) {
  if (!manifest.is_array()) throw ConfigError("manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  std::set<std::string> ids;
  for (const auto& item : manifest) {
    ManifestEntry e;
    try {
      e.project_id = item.at("project_id").get<std::string>();
      e.path = item.value("path", e.project_id);
      e.category = item.value("category", std::string("Other"));
      e.stars = item.value("stars", std::int64_t{0});
      e.author = item.value("author", std::string("unknown"));
    } catch (const json::exception& ex) {
      throw ConfigError(std::string("malformed manifest entry: ") + ex.what());
    }
    if (!ids.insert(e.project_id).second) throw ConfigError("duplicate project_id in manifest: " + e.project_id);
    if (e.stars < 0) throw ConfigError("negative star count for " + e.project_id);
    fs::path p = e.path;
    if (p.is_relative()) e.path = (fs::path(base_dir) / p).lexically_normal().string();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid manifest " + path + ": " + e.what());
  }
  return parse_manifest(j, fs::absolute(path).parent_path().string());
}

const std::vector<std::string>& star_buckets() {
  static const std::vector<std::string> buckets = {"0–50", "50–100", "100–500", "500–1000",
                                                   ">1000"};
  return buckets;
}

std::string star_bucket(std::int64_t stars) {
  const auto& b = star_buckets();
  if (stars < 50) return b[0];
  if (stars < 100) return b[1];
  if (stars < 500) return b[2];
  if (stars < 1000) return b[3];
  return b[4];
}

// ------------------------------------------------------------ aggregation

std::int64_t VerdictCounts::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::int64_t VerdictCounts::vulnerable() const {
  return (*this)[Verdict::AuthNone] + (*this)[Verdict::AuthCache] + (*this)[Verdict::AuthRuntime];
}

VerdictCounts& VerdictCounts::operator+=(const VerdictCounts& other) {
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

std::optional<double> CorpusSummary::server_rate() const {
  std::int64_t considered = servers_total - servers_exempt;
  if (considered <= 0) return std::nullopt;
  return 100.0 * static_cast<double>(servers_vulnerable) / static_cast<double>(considered);
}

std::optional<double> CorpusSummary::tool_rate() const {
  std::int64_t considered = totals.total() - (exempt_no_sensitive ? totals[Verdict::NoSensitiveOps] : 0);
  if (considered <= 0) return std::nullopt;
  return 100.0 * static_cast<double>(totals.vulnerable()) / static_cast<double>(considered);
}

CorpusSummary aggregate_corpus(const std::vector<ManifestEntry>& manifest, const std::vector<ProjectReport>& reports,
                               bool exempt_no_sensitive) {
  CorpusSummary s;
  s.exempt_no_sensitive = exempt_no_sensitive;
  std::map<std::string, const ManifestEntry*> meta;
  for (const auto& m : manifest) meta[m.project_id] = &m;
  std::set<std::string> seen;
  for (const auto& r : reports) {
    if (!seen.insert(r.project_id).second) throw InconsistentInput("duplicate report for project " + r.project_id);
    std::string category = "Other", bucket = "unknown", author = "unknown";
    if (auto it = meta.find(r.project_id); it != meta.end()) {
      category = it->second->category;
      bucket = star_bucket(it->second->stars);
      author = it->second->author;
    } else {
      s.diagnostics.push_back({DiagnosticKind::UnknownProject,
                               "no manifest metadata for project " + r.project_id, std::nullopt});
    }
    VerdictCounts counts;
    for (const auto& t : r.tool_reports) {
      counts.add(t.classification.verdict);
      if (!is_vulnerable(t.classification.verdict)) continue;
      std::set<std::string> caps;
      for (const auto& op : t.classification.unguarded_operations) caps.insert(to_string(op.category));
      for (const auto& c : caps) ++s.vulnerable_capabilities[c];
    }
    s.by_category[category] += counts;
    s.by_star_range[bucket] += counts;
    s.totals += counts;
    ++s.servers_total;
    if (counts.vulnerable() > 0) {
      ++s.servers_vulnerable;
      ++s.vulnerable_servers_by_author[author];
    } else if (exempt_no_sensitive && counts[Verdict::NoSensitiveOps] == counts.total()) {
      ++s.servers_exempt;
    }
  }
  return s;
}

CorpusRun run_corpus(const std::vector<ManifestEntry>& manifest, const AnalysisOptions& options, unsigned jobs,
                     bool exempt_no_sensitive) {
  std::vector<std::optional<ProjectReport>> slots(manifest.size());
  std::vector<std::optional<std::string>> failures(manifest.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < manifest.size(); i = next++) {
      try {
        ProjectReport r = analyze_project(manifest[i].path, options);
        r.project_id = manifest[i].project_id;
        slots[i] = std::move(r);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, manifest.size()))));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  CorpusRun run;
  for (auto& s : slots) {
    if (s) run.reports.push_back(std::move(*s));
  }
  run.summary = aggregate_corpus(manifest, run.reports, exempt_no_sensitive);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (failures[i]) {
      run.summary.diagnostics.push_back({DiagnosticKind::SkippedFile,
                                         "project " + manifest[i].project_id + " not analyzed: " + *failures[i],
                                         std::nullopt});
    }
  }
  return run;
}

// ------------------------------------------------------------------- json

json to_json(const ProjectReport& report) {
  json tools = json::array();
  for (const auto& t : report.tool_reports) {
    const Classification& c = t.classification;
    json ops = json::array(), checks = json::array(), supporting = json::array(), unguarded = json::array();
    for (const auto& op : t.sensitive_operations) ops.push_back(operation_json(op));
    for (const auto& a : t.auth_checks) checks.push_back(check_json(a));
    for (const auto& s : c.supporting_checks) {
      for (std::size_t i = 0; i < t.auth_checks.size(); ++i) {
        if (same_check(s, t.auth_checks[i])) {
          supporting.push_back(i);
          break;
        }
      }
    }
    for (const auto& u : c.unguarded_operations) {
      for (std::size_t i = 0; i < t.sensitive_operations.size(); ++i) {
        if (same_operation(u, t.sensitive_operations[i])) {
          unguarded.push_back(i);
          break;
        }
      }
    }
    json tj = {{"tool_name", t.tool.tool_name},
               {"handler", t.tool.handler},
               {"registration_pattern", to_string(t.tool.registration_pattern)},
               {"location", location_json(t.tool.location)},
               {"description", t.tool.description},
               {"verdict", to_string(c.verdict)},
               {"vulnerable", is_vulnerable(c.verdict)},
               {"unconfirmed", c.unconfirmed},
               {"rationale", c.rationale},
               {"sensitive_operations", ops},
               {"auth_checks", checks},
               {"supporting_checks", supporting},
               {"unguarded_operations", unguarded},
               {"diagnostics", diagnostics_json(c.diagnostics)}};
    if (t.enforcement) {
      tj["enforcement"] = to_string(*t.enforcement);
      json probes = json::array();
      for (const auto& p : t.probes) probes.push_back(to_json(p));
      tj["probes"] = probes;
    }
    tools.push_back(std::move(tj));
  }
  VerdictCounts counts;
  for (const auto& t : report.tool_reports) counts.add(t.classification.verdict);
  return {{"schema_version", kSchemaVersion},
          {"project_id", report.project_id},
          {"versions",
           {{"tool", report.versions.tool},
            {"sensitive_api_table", report.versions.api_table_hash},
            {"identity_lexicon", report.versions.lexicon_hash}}},
          {"analysis_duration_ms", report.analysis_duration_ms},
          {"diagnostics", diagnostics_json(report.diagnostics)},
          {"tools", tools},
          {"summary", {{"verdicts", counts_json(counts)}, {"vulnerable_tools", counts.vulnerable()}}}};
}

ProjectReport report_from_json(const json& j) {
  if (j.value("schema_version", std::string()) != kSchemaVersion) {
    throw ConfigError("unsupported report schema version");
  }
  try {
    ProjectReport r;
    r.project_id = j.at("project_id").get<std::string>();
    r.versions.tool = j.at("versions").at("tool").get<std::string>();
    r.versions.api_table_hash = j.at("versions").at("sensitive_api_table").get<std::string>();
    r.versions.lexicon_hash = j.at("versions").at("identity_lexicon").get<std::string>();
    r.analysis_duration_ms = j.at("analysis_duration_ms").get<std::int64_t>();
    r.diagnostics = diagnostics_from(j.at("diagnostics"));
    for (const auto& tj : j.at("tools")) {
      ToolReport t;
      t.tool.tool_name = tj.at("tool_name").get<std::string>();
      t.tool.handler = tj.at("handler").get<std::string>();
      t.tool.registration_pattern = registration_pattern_from_string(tj.at("registration_pattern").get<std::string>());
      t.tool.location = location_from(tj.at("location"));
      t.tool.description = tj.value("description", std::string());
      for (const auto& o : tj.at("sensitive_operations")) t.sensitive_operations.push_back(operation_from(o));
      for (const auto& a : tj.at("auth_checks")) t.auth_checks.push_back(check_from(a));
      Classification& c = t.classification;
      c.tool = t.tool;
      c.verdict = verdict_from_string(tj.at("verdict").get<std::string>());
      c.unconfirmed = tj.at("unconfirmed").get<bool>();
      c.rationale = tj.value("rationale", std::string());
      for (const auto& i : tj.at("supporting_checks")) c.supporting_checks.push_back(t.auth_checks.at(i.get<std::size_t>()));
      for (const auto& i : tj.at("unguarded_operations")) {
        c.unguarded_operations.push_back(t.sensitive_operations.at(i.get<std::size_t>()));
      }
      c.diagnostics = diagnostics_from(tj.value("diagnostics", json::array()));
      if (tj.contains("enforcement")) {
        t.enforcement = enforcement_from_string(tj["enforcement"].get<std::string>());
        for (const auto& p : tj.value("probes", json::array())) {
          ValidationOutcome o;
          o.tool_name = p.at("tool_name").get<std::string>();
          o.arguments_used = p.at("arguments_used");
          o.result = probe_result_from_string(p.at("result").get<std::string>());
          o.raw_response = p.at("raw_response");
          o.elapsed_ms = p.at("elapsed_ms").get<std::int64_t>();
          t.probes.push_back(std::move(o));
        }
      }
      r.tool_reports.push_back(std::move(t));
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

json to_json(const CorpusSummary& s) {
  json cats = json::object(), stars = json::object();
  for (const auto& [k, v] : s.by_category) cats[k] = counts_json(v);
  for (const auto& [k, v] : s.by_star_range) stars[k] = counts_json(v);
  auto rate = [](const std::optional<double>& r) { return r ? json(format_rate(r)) : json("n/a"); };
  return {{"schema_version", kSchemaVersion},
          {"by_category", cats},
          {"by_star_range", stars},
          {"vulnerable_capabilities", s.vulnerable_capabilities},
          {"vulnerable_servers_by_author", s.vulnerable_servers_by_author},
          {"totals", counts_json(s.totals)},
          {"servers", {{"total", s.servers_total}, {"exempt", s.servers_exempt}, {"vulnerable", s.servers_vulnerable}}},
          {"exempt_no_sensitive", s.exempt_no_sensitive},
          {"server_vulnerability_rate", rate(s.server_rate())},
          {"tool_vulnerability_rate", rate(s.tool_rate())},
          {"diagnostics", diagnostics_json(s.diagnostics)}};
}

CorpusSummary summary_from_json(const json& j) {
  if (j.value("schema_version", std::string()) != kSchemaVersion) {
    throw ConfigError("unsupported summary schema version");
  }
  try {
    CorpusSummary s;
    for (const auto& [k, v] : j.at("by_category").items()) s.by_category[k] = counts_from(v);
    for (const auto& [k, v] : j.at("by_star_range").items()) s.by_star_range[k] = counts_from(v);
    s.vulnerable_capabilities = j.at("vulnerable_capabilities").get<std::map<std::string, std::int64_t>>();
    s.vulnerable_servers_by_author = j.at("vulnerable_servers_by_author").get<std::map<std::string, std::int64_t>>();
    s.totals = counts_from(j.at("totals"));
    s.servers_total = j.at("servers").at("total").get<std::int64_t>();
    s.servers_exempt = j.at("servers").at("exempt").get<std::int64_t>();
    s.servers_vulnerable = j.at("servers").at("vulnerable").get<std::int64_t>();
    s.exempt_no_sensitive = j.at("exempt_no_sensitive").get<bool>();
    s.diagnostics = diagnostics_from(j.at("diagnostics"));
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed summary: ") + e.what());
  }
}

// ------------------------------------------------------------------- text

std::string format_rate(const std::optional<double>& rate) {
  if (!rate) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", *rate);
  return buf;
}

namespace {

// Display width for padding; counts UTF-8 code points.
std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::string pad(const std::string& s, std::size_t width) {
  std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

void counts_table(std::ostringstream& out, const std::string& heading,
                  const std::map<std::string, VerdictCounts>& rows, const VerdictCounts& totals,
                  const std::vector<std::string>& order = {}) {
  std::size_t first = heading.size();
  for (const auto& [k, _] : rows) first = std::max(first, display_width(k));
  first = std::max<std::size_t>(first, 5) + 2;
  out << pad(heading, first);
  for (auto v : kVerdictOrder) out << std::setw(16) << to_string(v);
  out << std::setw(8) << "Total" << "\n";
  auto row = [&](const std::string& label, const VerdictCounts& c) {
    out << pad(label, first);
    for (auto v : kVerdictOrder) out << std::setw(16) << c[v];
    out << std::setw(8) << c.total() << "\n";
  };
  std::vector<std::string> labels;
  for (const auto& k : order) {
    if (rows.count(k)) labels.push_back(k);
  }
  for (const auto& [k, _] : rows) {
    if (std::find(labels.begin(), labels.end(), k) == labels.end()) labels.push_back(k);
  }
  for (const auto& k : labels) row(k, rows.at(k));
  row("Total", totals);
}

}  // namespace

std::string emit(const ProjectReport& report, OutputFormat format) {
  if (format == OutputFormat::Json) return to_json(report).dump(2) + "\n";
  std::ostringstream out;
  out << "project: " << report.project_id << "\n";
  out << "tools: " << report.tool_reports.size() << ", vulnerable: " << report.vulnerable_tools() << "\n";
  if (report.analysis_duration_ms > 0) out << "analysis time: " << report.analysis_duration_ms << " ms\n";
  out << "\n";
  std::size_t name_w = 4;
  for (const auto& t : report.tool_reports) name_w = std::max(name_w, t.tool.tool_name.size());
  out << pad("TOOL", name_w + 2) << pad("VERDICT", 16) << pad("OPS", 5) << "LOCATION\n";
  for (const auto& t : report.tool_reports) {
    std::string verdict = to_string(t.classification.verdict);
    if (t.classification.unconfirmed) verdict += "?";
    out << pad(t.tool.tool_name, name_w + 2) << pad(verdict, 16)
        << pad(std::to_string(t.sensitive_operations.size()), 5) << t.tool.location.str() << "\n";
  }
  for (const auto& t : report.tool_reports) {
    const Classification& c = t.classification;
    if (!is_vulnerable(c.verdict)) continue;
    out << "\n" << t.tool.tool_name << " (" << to_string(c.verdict) << "): " << c.rationale << "\n";
    for (const auto& op : c.unguarded_operations) {
      out << "  " << to_string(op.category) << " / " << op.subcategory << ": " << op.matched_api << " at "
          << op.location.str() << (op.input_dependent ? " [input-dependent]" : "") << "\n";
      out << "    via " << util::join(op.via_path.begin(), op.via_path.end(), " -> ") << "\n";
    }
    for (const auto& a : c.supporting_checks) {
      out << "  check " << to_string(a.form) << "/" << to_string(a.timing)
          << (a.caller_bound ? " caller-bound" : "") << ": " << a.evidence << " at " << a.guard_location.str()
          << "\n";
    }
    if (t.enforcement) out << "  dynamic: " << to_string(*t.enforcement) << "\n";
  }
  if (!report.diagnostics.empty()) {
    out << "\ndiagnostics:\n";
    for (const auto& d : report.diagnostics) {
      out << "  [" << to_string(d.kind) << "] " << d.message;
      if (d.location) out << " (" << d.location->str() << ")";
      out << "\n";
    }
  }
  return out.str();
}

std::string emit(const CorpusSummary& s, OutputFormat format) {
  if (format == OutputFormat::Json) return to_json(s).dump(2) + "\n";
  std::ostringstream out;
  counts_table(out, "Category", s.by_category, s.totals);
  out << "\n";
  counts_table(out, "Stars", s.by_star_range, s.totals, star_buckets());
  out << "\nVulnerable capabilities\n";
  for (const auto& [k, v] : s.vulnerable_capabilities) out << "  " << pad(k, 24) << v << "\n";
  out << "\nVulnerable servers by author\n";
  for (const auto& [k, v] : s.vulnerable_servers_by_author) out << "  " << pad(k, 24) << v << "\n";
  out << "\nServers: " << s.servers_total << ", vulnerable: " << s.servers_vulnerable;
  if (s.exempt_no_sensitive) out << ", exempt: " << s.servers_exempt;
  out << "\nServer vulnerability rate: " << format_rate(s.server_rate()) << "\n";
  out << "Tool vulnerability rate: " << format_rate(s.tool_rate()) << "\n";
  for (const auto& d : s.diagnostics) out << "[" << to_string(d.kind) << "] " << d.message << "\n";
  return out.str();
}

}  // namespace mcpauth
