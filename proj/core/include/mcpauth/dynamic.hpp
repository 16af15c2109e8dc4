#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcpauth/authz.hpp"

namespace mcpauth {

class SpawnFailure : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class HandshakeTimeout : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class ProtocolMismatch : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
class TransportError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
/// Raised when a request is attempted outside the Initialized state.
class SessionStateError : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};
/// Raised before any traffic when the target is neither harness-launched
/// nor allow-listed by the operator.
class EndpointNotAllowed : public AnalysisError {
 public:
  using AnalysisError::AnalysisError;
};

enum class Transport { Stdio, SseHttp };
enum class ProtocolState { Spawned, Initialized, Failed, Closed };
enum class Direction { Sent, Received, TimedOut };

const char* to_string(Transport transport);
const char* to_string(ProtocolState state);
const char* to_string(Direction direction);

struct TrafficRecord {
  Direction direction;
  std::string raw;  // exact bytes, without the stdio line terminator
  std::int64_t timestamp_ms;  // since session start
};

struct LaunchDescriptor {
  Transport transport = Transport::Stdio;
  std::vector<std::string> command;  // empty for a pre-existing SSE endpoint
  std::string url;
  /// Variables copied from the harness environment (PATH is always kept).
  std::vector<std::string> env_passthrough;
  std::map<std::string, std::string> env_values;
  std::string cwd;  // empty: fresh scratch directory
  /// Files written into the working directory before launch.
  std::map<std::string, std::string> prime_files;

  static LaunchDescriptor from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static LaunchDescriptor load(const std::string& path);
  bool harness_launched() const { return !command.empty(); }
};

struct ValidatorOptions {
  std::chrono::milliseconds handshake_timeout{10'000};
  std::chrono::milliseconds probe_timeout{15'000};
  std::chrono::milliseconds server_budget{120'000};
  std::string protocol_version = "2024-11-05";
  std::string probe_marker = "mcpauth-probe";
  std::vector<std::string> auth_markers = default_auth_markers();
  /// URLs (or scheme://host:port prefixes) the operator permits probing.
  std::vector<std::string> allowed_endpoints;

  static std::vector<std::string> default_auth_markers();
};

/// Throws EndpointNotAllowed unless the descriptor targets a process this
/// harness launches or an operator allow-listed endpoint.
void check_probe_permitted(const LaunchDescriptor& descriptor, const ValidatorOptions& options);

class ServerSession {
 public:
  class Channel;

  ServerSession(Transport transport, std::string endpoint, std::unique_ptr<Channel> channel);
  ServerSession(ServerSession&&) noexcept;
  ServerSession& operator=(ServerSession&&) noexcept;
  ~ServerSession();

  Transport transport() const { return transport_; }
  const std::string& endpoint() const { return endpoint_; }
  ProtocolState protocol_state() const { return state_; }
  const std::string& negotiated_protocol_version() const { return version_; }
  const std::vector<TrafficRecord>& captured_traffic() const { return traffic_; }

  /// Sends a request and waits for the response with the same id. Returns
  /// nullopt on deadline expiry (recorded as a TimedOut traffic entry).
  std::optional<nlohmann::json> request(const std::string& method, const nlohmann::json& params,
                                        std::chrono::milliseconds timeout);
  void notify(const std::string& method, const nlohmann::json& params);
  void initialize(const ValidatorOptions& options);
  void close();

 private:
  void send(const nlohmann::json& message);
  void record(Direction direction, std::string raw);

  Transport transport_;
  std::string endpoint_;
  ProtocolState state_ = ProtocolState::Spawned;
  std::string version_;
  std::vector<TrafficRecord> traffic_;
  std::unique_ptr<Channel> channel_;
  std::chrono::steady_clock::time_point start_;
  std::int64_t next_id_ = 1;
};

ServerSession activate_server(const LaunchDescriptor& descriptor, const ValidatorOptions& options = {});

struct AdvertisedTool {
  std::string name;
  nlohmann::json input_schema;
};

std::vector<AdvertisedTool> list_tools(ServerSession& session,
                                       std::chrono::milliseconds timeout = std::chrono::milliseconds{15'000});

enum class ProbeResult { ExecutedUnderExistingAuth, AuthorizationEnforced, TransportError, Timeout, Inconclusive };
const char* to_string(ProbeResult result);
ProbeResult probe_result_from_string(std::string_view text);

struct ValidationOutcome {
  std::string tool_name;
  nlohmann::json arguments_used = nlohmann::json::object();
  ProbeResult result = ProbeResult::Inconclusive;
  nlohmann::json raw_response;
  std::int64_t elapsed_ms = 0;
};

/// Minimal benign arguments from a JSON schema: required properties (all
/// properties when none are required) filled with type-appropriate values.
nlohmann::json probe_arguments(const nlohmann::json& input_schema, const std::string& marker);

/// Maps a JSON-RPC response to a probe result; nullopt means timeout.
ProbeResult classify_response(const std::optional<nlohmann::json>& response,
                              const std::vector<std::string>& auth_markers);

ValidationOutcome invoke_tool(ServerSession& session, const std::string& name, const nlohmann::json& args,
                              const ValidatorOptions& options = {});

enum class Enforcement { Enforced, NotEnforced, Inconclusive };
const char* to_string(Enforcement enforcement);
Enforcement enforcement_from_string(std::string_view text);

/// Order-insensitive. Throws InconsistentInput on an empty list.
Enforcement judge_enforcement(const std::vector<ValidationOutcome>& outcomes);

/// Folds a dynamic verdict into a static classification.
Classification merge_enforcement(Classification classification, Enforcement enforcement);

struct ServerValidation {
  std::string endpoint;
  std::string negotiated_protocol_version;
  std::vector<AdvertisedTool> advertised;
  std::map<std::string, std::vector<ValidationOutcome>> outcomes;
  std::map<std::string, Enforcement> enforcement;
  std::vector<TrafficRecord> traffic;
  Diagnostics diagnostics;
};

/// Launches the server, lists tools and probes each requested tool once
/// (all advertised tools when `tools` is empty) within the server budget.
ServerValidation validate_server(const LaunchDescriptor& descriptor, const std::vector<std::string>& tools,
                                 const ValidatorOptions& options = {});

nlohmann::json to_json(const ValidationOutcome& outcome);

}  // namespace mcpauth
