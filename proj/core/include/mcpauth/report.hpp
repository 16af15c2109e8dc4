#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpauth/authz.hpp"
#include "mcpauth/dynamic.hpp"
#include "mcpauth/sensitive_ops.hpp"
#include "mcpauth/tool_entries.hpp"

namespace mcpauth {

inline constexpr const char* kSchemaVersion = "1";
inline constexpr const char* kDefaultLaunchDescriptor = "mcpauth-launch.json";

struct AnalysisOptions {
  const SensitiveApiTable* api_table = nullptr;  // builtin when null
  const IdentityLexicon* lexicon = nullptr;      // builtin when null
  bool dynamic = false;
  ValidatorOptions validator;
  /// Launch descriptor for dynamic runs; defaults to <project>/mcpauth-launch.json.
  std::string launch_descriptor;
  /// Suppresses wall-clock fields so output is byte-stable.
  bool deterministic = false;
};

struct ToolReport {
  ToolEntry tool;
  Classification classification;
  std::vector<SensitiveOperation> sensitive_operations;
  std::vector<AuthCheck> auth_checks;
  std::optional<Enforcement> enforcement;
  std::vector<ValidationOutcome> probes;
};

struct ReportVersions {
  std::string tool = kToolVersion;
  std::string api_table_hash;
  std::string lexicon_hash;
};

struct ProjectReport {
  std::string project_id;
  std::vector<ToolReport> tool_reports;  // ordered by (file, line)
  Diagnostics diagnostics;
  std::int64_t analysis_duration_ms = 0;
  ReportVersions versions;

  std::size_t vulnerable_tools() const;
  bool vulnerable() const { return vulnerable_tools() > 0; }
};

ProjectReport analyze_model(const ProgramModel& model, const AnalysisOptions& options = {});
/// Throws ProjectNotFound when `path` is not a directory.
ProjectReport analyze_project(const std::filesystem::path& path, const AnalysisOptions& options = {});

struct ManifestEntry {
  std::string project_id;
  std::string path;  // resolved against the manifest's directory
  std::string category;
  std::int64_t stars = 0;
  std::string author;
};

std::vector<ManifestEntry> parse_manifest(const nlohmann::json& manifest, const std::string& base_dir = ".");
std::vector<ManifestEntry> load_manifest(const std::string& path);

/// Lower-inclusive, upper-exclusive popularity buckets.
std::string star_bucket(std::int64_t stars);
const std::vector<std::string>& star_buckets();

/// Tool counts per verdict, indexed by verdict_rank.
struct VerdictCounts {
  std::array<std::int64_t, 5> counts{};

  void add(Verdict v) { ++counts[static_cast<std::size_t>(verdict_rank(v))]; }
  std::int64_t operator[](Verdict v) const { return counts[static_cast<std::size_t>(verdict_rank(v))]; }
  std::int64_t total() const;
  std::int64_t vulnerable() const;
  VerdictCounts& operator+=(const VerdictCounts& other);
  bool operator==(const VerdictCounts&) const = default;
};

struct CorpusSummary {
  std::map<std::string, VerdictCounts> by_category;
  std::map<std::string, VerdictCounts> by_star_range;
  /// Resource categories reached by unguarded operations of vulnerable tools.
  std::map<std::string, std::int64_t> vulnerable_capabilities;
  std::map<std::string, std::int64_t> vulnerable_servers_by_author;
  VerdictCounts totals;
  std::int64_t servers_total = 0;
  std::int64_t servers_exempt = 0;
  std::int64_t servers_vulnerable = 0;
  /// When set, NoSensitiveOps tools and servers with only such tools leave
  /// the rate denominators.
  bool exempt_no_sensitive = false;
  Diagnostics diagnostics;

  /// Vulnerable servers over considered servers; nullopt when none.
  std::optional<double> server_rate() const;
  std::optional<double> tool_rate() const;
};

/// Throws InconsistentInput when two reports share a project id.
CorpusSummary aggregate_corpus(const std::vector<ManifestEntry>& manifest,
                               const std::vector<ProjectReport>& reports, bool exempt_no_sensitive = false);

struct CorpusRun {
  std::vector<ProjectReport> reports;  // manifest order, failed projects omitted
  CorpusSummary summary;
};

/// Analyzes every manifest project on `jobs` workers, then aggregates.
CorpusRun run_corpus(const std::vector<ManifestEntry>& manifest, const AnalysisOptions& options,
                     unsigned jobs = 1, bool exempt_no_sensitive = false);

enum class OutputFormat { Json, Text };

nlohmann::json to_json(const ProjectReport& report);
nlohmann::json to_json(const CorpusSummary& summary);
ProjectReport report_from_json(const nlohmann::json& j);
CorpusSummary summary_from_json(const nlohmann::json& j);

std::string emit(const ProjectReport& report, OutputFormat format);
std::string emit(const CorpusSummary& summary, OutputFormat format);
std::string format_rate(const std::optional<double>& rate);

}  // namespace mcpauth
