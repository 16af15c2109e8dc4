#include "mcpauth/dynamic.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "embedded_data.hpp"
#include "util.hpp"

namespace mcpauth {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

const char* to_string(Transport transport) { return transport == Transport::Stdio ? "stdio" : "sse"; }

const char* to_string(ProtocolState state) {
  switch (state) {
    case ProtocolState::Spawned: return "Spawned";
    case ProtocolState::Initialized: return "Initialized";
    case ProtocolState::Failed: return "Failed";
    case ProtocolState::Closed: return "Closed";
  }
  return "Failed";
}

const char* to_string(Direction direction) {
  switch (direction) {
    case Direction::Sent: return "sent";
    case Direction::Received: return "received";
    case Direction::TimedOut: return "timeout";
  }
  return "sent";
}

const char* to_string(ProbeResult result) {
  switch (result) {
    case ProbeResult::ExecutedUnderExistingAuth: return "ExecutedUnderExistingAuth";
    case ProbeResult::AuthorizationEnforced: return "AuthorizationEnforced";
    case ProbeResult::TransportError: return "TransportError";
    case ProbeResult::Timeout: return "Timeout";
    case ProbeResult::Inconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

ProbeResult probe_result_from_string(std::string_view text) {
  for (auto r : {ProbeResult::ExecutedUnderExistingAuth, ProbeResult::AuthorizationEnforced,
                 ProbeResult::TransportError, ProbeResult::Timeout, ProbeResult::Inconclusive}) {
    if (text == to_string(r)) return r;
  }
  throw ConfigError("unknown probe result: " + std::string(text));
}

const char* to_string(Enforcement enforcement) {
  switch (enforcement) {
    case Enforcement::Enforced: return "Enforced";
    case Enforcement::NotEnforced: return "NotEnforced";
    case Enforcement::Inconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

Enforcement enforcement_from_string(std::string_view text) {
  for (auto e : {Enforcement::Enforced, Enforcement::NotEnforced, Enforcement::Inconclusive}) {
    if (text == to_string(e)) return e;
  }
  throw ConfigError("unknown enforcement verdict: " + std::string(text));
}

std::vector<std::string> ValidatorOptions::default_auth_markers() {
  std::vector<std::string> markers;
  for (const auto& line : util::split(data::auth_failure_markers(), '\n')) {
    std::string m = util::trim(line);
    if (!m.empty() && m[0] != '#') markers.push_back(util::lower(m));
  }
  return markers;
}

// ------------------------------------------------------------ descriptor

LaunchDescriptor LaunchDescriptor::from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("launch descriptor must be a JSON object");
  LaunchDescriptor d;
  std::string transport = j.value("transport", std::string("stdio"));
  if (transport == "stdio") {
    d.transport = Transport::Stdio;
  } else if (transport == "sse" || transport == "sse-http" || transport == "SseHttp") {
    d.transport = Transport::SseHttp;
  } else {
    throw ConfigError("unknown transport: " + transport);
  }
  if (j.contains("command")) {
    const auto& c = j.at("command");
    if (c.is_string()) {
      for (auto& part : util::split(c.get<std::string>(), ' ')) {
        if (!part.empty()) d.command.push_back(part);
      }
    } else if (c.is_array()) {
      d.command = c.get<std::vector<std::string>>();
    } else {
      throw ConfigError("command must be a string or an array");
    }
  }
  d.url = j.value("url", std::string());
  if (d.transport == Transport::Stdio && d.command.empty()) throw ConfigError("stdio descriptor needs a command");
  if (d.transport == Transport::SseHttp && d.url.empty()) throw ConfigError("sse descriptor needs a url");

  fs::path base = fs::absolute(base_dir);
  for (std::size_t i = 1; i < d.command.size(); ++i) {
    fs::path arg = d.command[i];
    std::error_code ec;
    if (arg.is_relative() && fs::exists(base / arg, ec)) d.command[i] = (base / arg).lexically_normal().string();
  }
  if (j.contains("env")) {
    const auto& env = j.at("env");
    if (env.is_array()) {
      d.env_passthrough = env.get<std::vector<std::string>>();
    } else if (env.is_object()) {
      for (const auto& [k, v] : env.items()) {
        if (v.is_null()) {
          d.env_passthrough.push_back(k);
        } else {
          d.env_values[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
    } else {
      throw ConfigError("env must be an array of names or an object");
    }
  }
  if (j.contains("cwd") && !j.at("cwd").is_null()) {
    fs::path cwd = j.at("cwd").get<std::string>();
    d.cwd = (cwd.is_relative() ? base / cwd : cwd).lexically_normal().string();
  }
  if (j.contains("prime_files")) {
    for (const auto& [k, v] : j.at("prime_files").items()) {
      if (fs::path(k).is_absolute() || k.find("..") != std::string::npos) {
        throw ConfigError("prime file must stay inside the working directory: " + k);
      }
      d.prime_files[k] = v.get<std::string>();
    }
  }
  return d;
}

LaunchDescriptor LaunchDescriptor::load(const std::string& path) {
  json j;
  try {
    j = json::parse(util::read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid launch descriptor " + path + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path().string());
}

namespace {

struct UrlParts {
  std::string origin;  // scheme://host:port
  std::string host;
  std::string path;
};

UrlParts split_url(const std::string& url) {
  UrlParts p;
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("url needs a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  p.origin = url.substr(0, slash);
  p.path = slash == std::string::npos ? "/" : url.substr(slash);
  std::string authority = url.substr(scheme + 3, slash == std::string::npos ? std::string::npos : slash - scheme - 3);
  if (!authority.empty() && authority[0] == '[') {
    p.host = authority.substr(1, authority.find(']') - 1);
  } else {
    p.host = authority.substr(0, authority.find(':'));
  }
  return p;
}

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "::1" || util::starts_with(host, "127.");
}

bool allow_listed(const std::string& url, const std::vector<std::string>& allowed) {
  for (const auto& entry : allowed) {
    if (entry.empty()) continue;
    if (url == entry) return true;
    if (util::starts_with(url, entry) &&
        (entry.back() == '/' || url[entry.size()] == '/' || url[entry.size()] == '?')) {
      return true;
    }
  }
  return false;
}

}  // namespace

void check_probe_permitted(const LaunchDescriptor& d, const ValidatorOptions& options) {
  if (d.transport == Transport::Stdio) {
    if (!d.harness_launched()) throw EndpointNotAllowed("stdio descriptor without a command");
    return;
  }
  if (allow_listed(d.url, options.allowed_endpoints)) return;
  if (d.harness_launched() && is_loopback(split_url(d.url).host)) return;
  throw EndpointNotAllowed("refusing to probe " + d.url +
                           ": not launched by this harness and not allow-listed (--allow-endpoint)");
}

// ------------------------------------------------------------- processes

namespace {

class Process {
 public:
  Process(const LaunchDescriptor& d, const std::string& cwd, bool pipes) {
    std::vector<std::string> env_strings;
    if (const char* path = std::getenv("PATH")) env_strings.push_back(std::string("PATH=") + path);
    for (const auto& name : d.env_passthrough) {
      if (name == "PATH") continue;
      if (const char* v = std::getenv(name.c_str())) env_strings.push_back(name + "=" + v);
    }
    for (const auto& [k, v] : d.env_values) env_strings.push_back(k + "=" + v);

    int in[2] = {-1, -1}, out[2] = {-1, -1}, status[2];
    if ((pipes && (pipe2(in, O_CLOEXEC) != 0 || pipe2(out, O_CLOEXEC) != 0)) || pipe2(status, O_CLOEXEC) != 0) {
      throw SpawnFailure(std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<char*> argv, envp;
    for (const auto& a : d.command) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    for (const auto& e : env_strings) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);

    pid_ = fork();
    if (pid_ < 0) throw SpawnFailure(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      int devnull = open("/dev/null", O_RDWR);
      if (pipes) {
        dup2(in[0], 0);
        dup2(out[1], 1);
      } else {
        dup2(devnull, 0);
        dup2(devnull, 1);
      }
      dup2(devnull, 2);
      setpgid(0, 0);
      int err = 0;
      if (chdir(cwd.c_str()) != 0) {
        err = errno;
      } else {
        execvpe(argv[0], argv.data(), envp.data());
        err = errno;
      }
      ssize_t ignored = write(status[1], &err, sizeof err);
      (void)ignored;
      _exit(127);
    }
    ::close(status[1]);
    if (pipes) {
      ::close(in[0]);
      ::close(out[1]);
      stdin_ = in[1];
      stdout_ = out[0];
    }
    int err = 0;
    ssize_t n;
    do {
      n = read(status[0], &err, sizeof err);
    } while (n < 0 && errno == EINTR);
    ::close(status[0]);
    if (n > 0) {
      terminate();
      throw SpawnFailure("cannot launch " + d.command.front() + ": " + std::strerror(err));
    }
  }

  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;
  ~Process() { terminate(); }

  int in() const { return stdin_; }
  int out() const { return stdout_; }

  void terminate() {
    if (stdin_ >= 0) ::close(stdin_);
    stdin_ = -1;
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 20; ++i) {
        if (waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          break;
        }
        if (i == 5) kill(-pid_, SIGTERM);
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      if (pid_ > 0) {
        kill(-pid_, SIGKILL);
        waitpid(pid_, &status, 0);
        pid_ = -1;
      }
    }
    if (stdout_ >= 0) ::close(stdout_);
    stdout_ = -1;
  }

 private:
  pid_t pid_ = -1;
  int stdin_ = -1;
  int stdout_ = -1;
};

class ScratchDir {
 public:
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "mcpauth-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw SpawnFailure("cannot create scratch directory");
    path_ = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

std::string prepare_cwd(const LaunchDescriptor& d, std::unique_ptr<ScratchDir>& scratch) {
  std::string cwd = d.cwd;
  if (cwd.empty()) {
    scratch = std::make_unique<ScratchDir>();
    cwd = scratch->path();
  }
  for (const auto& [name, content] : d.prime_files) {
    fs::path p = fs::path(cwd) / name;
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
  }
  return cwd;
}

}  // namespace

// -------------------------------------------------------------- channels

class ServerSession::Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const std::string& message) = 0;
  /// Next complete message, or nullopt at the deadline. Throws
  /// TransportError when the peer goes away.
  virtual std::optional<std::string> receive(Clock::time_point deadline) = 0;
  virtual void close() = 0;
};

namespace {

class StdioChannel : public ServerSession::Channel {
 public:
  explicit StdioChannel(const LaunchDescriptor& d) {
    // A server that exits early must surface as a write error, not a signal.
    signal(SIGPIPE, SIG_IGN);
    std::string cwd = prepare_cwd(d, scratch_);
    process_ = std::make_unique<Process>(d, cwd, true);
  }

  void send(const std::string& message) override {
    if (!process_) throw TransportError("session closed");
    std::string line = message + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = write(process_->in(), line.data() + off, line.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError(std::string("write to server failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> receive(Clock::time_point deadline) override {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::trim(line).empty()) continue;
        return line;
      }
      if (!process_) throw TransportError("session closed");
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (remaining <= 0) return std::nullopt;
      pollfd pfd{process_->out(), POLLIN, 0};
      int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
      if (rc < 0 && errno != EINTR) throw TransportError(std::string("poll: ") + std::strerror(errno));
      if (rc <= 0) continue;
      char chunk[4096];
      ssize_t n = read(process_->out(), chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("server closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close() override {
    process_.reset();
    scratch_.reset();
  }

 private:
  std::unique_ptr<ScratchDir> scratch_;
  std::unique_ptr<Process> process_;
  std::string buffer_;
};

class SseChannel : public ServerSession::Channel {
 public:
  SseChannel(const LaunchDescriptor& d, Clock::time_point deadline) : url_(split_url(d.url)) {
    if (d.harness_launched()) {
      std::string cwd = prepare_cwd(d, scratch_);
      process_ = std::make_unique<Process>(d, cwd, false);
    }
    stream_client_ = std::make_unique<httplib::Client>(url_.origin);
    post_client_ = std::make_unique<httplib::Client>(url_.origin);
    post_client_->set_connection_timeout(std::chrono::seconds(5));
    // A harness-launched server may need a moment to bind its port.
    for (;;) {
      start_stream();
      std::unique_lock lock(mu_);
      cv_.wait_until(lock, deadline, [&] { return !endpoint_.empty() || stream_done_; });
      if (!endpoint_.empty()) return;
      bool retry = stream_done_ && process_ && Clock::now() < deadline;
      std::string error = stream_error_;
      lock.unlock();
      join_stream();
      if (!retry) {
        if (error.empty()) throw HandshakeTimeout("no endpoint event from " + d.url);
        throw TransportError("cannot open event stream " + d.url + ": " + error);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }

  ~SseChannel() override { close(); }

  void send(const std::string& message) override {
    std::string endpoint;
    {
      std::lock_guard lock(mu_);
      endpoint = endpoint_;
    }
    auto res = post_client_->Post(endpoint, message, "application/json");
    if (!res) throw TransportError("POST " + endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2) throw TransportError("POST " + endpoint + " returned " + std::to_string(res->status));
  }

  std::optional<std::string> receive(Clock::time_point deadline) override {
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, deadline, [&] { return !messages_.empty() || stream_done_; });
    if (!messages_.empty()) {
      std::string m = std::move(messages_.front());
      messages_.pop_front();
      return m;
    }
    if (stream_done_) throw TransportError("event stream closed");
    return std::nullopt;
  }

  void close() override {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    if (stream_client_) stream_client_->stop();
    join_stream();
    process_.reset();
    scratch_.reset();
  }

 private:
  void start_stream() {
    {
      std::lock_guard lock(mu_);
      stream_done_ = false;
      stream_error_.clear();
      pending_.clear();
    }
    reader_ = std::thread([this] {
      auto res = stream_client_->Get(url_.path, httplib::Headers{{"Accept", "text/event-stream"}},
                                     [this](const char* data, std::size_t len) {
                                       std::lock_guard lock(mu_);
                                       if (stopping_) return false;
                                       pending_.append(data, len);
                                       drain_events();
                                       return true;
                                     });
      std::lock_guard lock(mu_);
      if (!res) {
        stream_error_ = httplib::to_string(res.error());
      } else if (res->status / 100 != 2) {
        stream_error_ = "status " + std::to_string(res->status);
      }
      stream_done_ = true;
      cv_.notify_all();
    });
  }

  void join_stream() {
    if (reader_.joinable()) reader_.join();
  }

  // Called with mu_ held.
  void drain_events() {
    for (;;) {
      std::size_t end = pending_.find("\n\n");
      std::size_t sep = 2;
      if (auto crlf = pending_.find("\r\n\r\n"); crlf != std::string::npos && crlf < end) {
        end = crlf;
        sep = 4;
      }
      if (end == std::string::npos) return;
      std::string block = pending_.substr(0, end);
      pending_.erase(0, end + sep);
      std::string event = "message", data;
      for (auto line : util::split(block, '\n')) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (util::starts_with(line, "event:")) event = util::trim(line.substr(6));
        if (util::starts_with(line, "data:")) {
          std::string piece = line.substr(5);
          if (!piece.empty() && piece[0] == ' ') piece.erase(0, 1);
          if (!data.empty()) data += "\n";
          data += piece;
        }
      }
      if (event == "endpoint") {
        endpoint_ = util::starts_with(data, "http") ? split_url(data).path : data;
      } else if (event == "message" && !data.empty()) {
        messages_.push_back(data);
      }
      cv_.notify_all();
    }
  }

  UrlParts url_;
  std::unique_ptr<ScratchDir> scratch_;
  std::unique_ptr<Process> process_;
  std::unique_ptr<httplib::Client> stream_client_;
  std::unique_ptr<httplib::Client> post_client_;
  std::thread reader_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::string pending_;
  std::string endpoint_;
  std::deque<std::string> messages_;
  bool stream_done_ = false;
  bool stopping_ = false;
  std::string stream_error_;
};

}  // namespace

// --------------------------------------------------------------- session

ServerSession::ServerSession(Transport transport, std::string endpoint, std::unique_ptr<Channel> channel)
    : transport_(transport), endpoint_(std::move(endpoint)), channel_(std::move(channel)), start_(Clock::now()) {}

ServerSession::ServerSession(ServerSession&&) noexcept = default;
ServerSession& ServerSession::operator=(ServerSession&&) noexcept = default;

ServerSession::~ServerSession() {
  try {
    close();
  } catch (...) {
  }
}

void ServerSession::close() {
  if (channel_) channel_->close();
  channel_.reset();
  if (state_ != ProtocolState::Failed) state_ = ProtocolState::Closed;
}

void ServerSession::record(Direction direction, std::string raw) {
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start_).count();
  traffic_.push_back({direction, std::move(raw), ms});
}

void ServerSession::send(const json& message) {
  if (!channel_) throw TransportError("session closed");
  std::string raw = message.dump();
  record(Direction::Sent, raw);
  channel_->send(raw);
}

namespace {

bool pre_initialize_method(const std::string& method) {
  return method == "initialize" || method == "notifications/initialized";
}

}  // namespace

std::optional<json> ServerSession::request(const std::string& method, const json& params,
                                           std::chrono::milliseconds timeout) {
  if (state_ != ProtocolState::Initialized && !pre_initialize_method(method)) {
    throw SessionStateError("cannot send " + method + " in state " + to_string(state_));
  }
  if (state_ == ProtocolState::Failed) throw SessionStateError("session failed");
  std::int64_t id = next_id_++;
  send({{"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}});
  auto deadline = Clock::now() + timeout;
  for (;;) {
    std::optional<std::string> raw = channel_->receive(deadline);
    if (!raw) {
      record(Direction::TimedOut, json{{"id", id}, {"method", method}}.dump());
      return std::nullopt;
    }
    record(Direction::Received, *raw);
    json msg = json::parse(*raw, nullptr, false);
    if (msg.is_discarded() || !msg.is_object()) continue;
    if (msg.contains("method")) {
      // Server-initiated request: answer pings, decline anything else.
      if (msg.contains("id")) {
        if (msg["method"] == "ping") {
          send({{"jsonrpc", "2.0"}, {"id", msg["id"]}, {"result", json::object()}});
        } else {
          send({{"jsonrpc", "2.0"},
                {"id", msg["id"]},
                {"error", {{"code", -32601}, {"message", "method not supported by client"}}}});
        }
      }
      continue;
    }
    if (msg.contains("id") && msg["id"] == id) return msg;
  }
}

void ServerSession::notify(const std::string& method, const json& params) {
  if (state_ != ProtocolState::Initialized && !pre_initialize_method(method)) {
    throw SessionStateError("cannot send " + method + " in state " + to_string(state_));
  }
  send({{"jsonrpc", "2.0"}, {"method", method}, {"params", params}});
}

void ServerSession::initialize(const ValidatorOptions& options) {
  if (state_ != ProtocolState::Spawned) throw SessionStateError("initialize already attempted");
  json params = {{"protocolVersion", options.protocol_version},
                 {"capabilities", json::object()},
                 {"clientInfo", {{"name", "mcp-authscan"}, {"version", kToolVersion}}}};
  std::optional<json> response;
  try {
    response = request("initialize", params, options.handshake_timeout);
  } catch (...) {
    state_ = ProtocolState::Failed;
    throw;
  }
  if (!response) {
    state_ = ProtocolState::Failed;
    throw HandshakeTimeout("no initialize response within " +
                           std::to_string(options.handshake_timeout.count()) + " ms");
  }
  const json& r = *response;
  if (r.contains("error") || !r.contains("result") || !r["result"].is_object() ||
      !r["result"].contains("protocolVersion") || !r["result"]["protocolVersion"].is_string()) {
    state_ = ProtocolState::Failed;
    throw ProtocolMismatch("unexpected initialize response: " + r.dump());
  }
  version_ = r["result"]["protocolVersion"].get<std::string>();
  notify("notifications/initialized", json::object());
  state_ = ProtocolState::Initialized;
}

ServerSession activate_server(const LaunchDescriptor& d, const ValidatorOptions& options) {
  check_probe_permitted(d, options);
  auto deadline = Clock::now() + options.handshake_timeout;
  std::unique_ptr<ServerSession::Channel> channel;
  std::string endpoint;
  if (d.transport == Transport::Stdio) {
    channel = std::make_unique<StdioChannel>(d);
    endpoint = util::join(d.command.begin(), d.command.end(), " ");
  } else {
    channel = std::make_unique<SseChannel>(d, deadline);
    endpoint = d.url;
  }
  ServerSession session(d.transport, endpoint, std::move(channel));
  ValidatorOptions remaining = options;
  remaining.handshake_timeout = std::max(std::chrono::milliseconds(1),
                                         std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()));
  session.initialize(remaining);
  return session;
}

std::vector<AdvertisedTool> list_tools(ServerSession& session, std::chrono::milliseconds timeout) {
  if (session.protocol_state() != ProtocolState::Initialized) {
    throw SessionStateError("tools/list requires an initialized session");
  }
  std::vector<AdvertisedTool> tools;
  json cursor;
  for (int page = 0; page < 100; ++page) {
    json params = json::object();
    if (!cursor.is_null()) params["cursor"] = cursor;
    auto response = session.request("tools/list", params, timeout);
    if (!response) throw TransportError("tools/list timed out");
    if (response->contains("error")) throw TransportError("tools/list failed: " + (*response)["error"].dump());
    const json& result = (*response)["result"];
    for (const auto& t : result.value("tools", json::array())) {
      if (!t.contains("name") || !t["name"].is_string()) continue;
      tools.push_back({t["name"].get<std::string>(), t.value("inputSchema", json::object())});
    }
    if (!result.contains("nextCursor") || result["nextCursor"].is_null()) break;
    cursor = result["nextCursor"];
  }
  return tools;
}

// ---------------------------------------------------------------- probes

json probe_arguments(const json& schema, const std::string& marker) {
  json args = json::object();
  if (!schema.is_object()) return args;
  json props = schema.value("properties", json::object());
  std::vector<std::string> names;
  if (schema.contains("required") && schema["required"].is_array() && !schema["required"].empty()) {
    for (const auto& n : schema["required"]) {
      if (n.is_string()) names.push_back(n.get<std::string>());
    }
  } else if (props.is_object()) {
    for (const auto& [k, _] : props.items()) names.push_back(k);
  }
  for (const auto& name : names) {
    std::string type = "string";
    if (props.is_object() && props.contains(name) && props[name].is_object()) {
      const json& t = props[name].value("type", json("string"));
      if (t.is_string()) {
        type = t.get<std::string>();
      } else if (t.is_array()) {
        for (const auto& alt : t) {
          if (alt.is_string() && alt != "null") {
            type = alt.get<std::string>();
            break;
          }
        }
      }
    }
    if (type == "integer" || type == "number") {
      args[name] = 0;
    } else if (type == "boolean") {
      args[name] = false;
    } else if (type == "array") {
      args[name] = json::array();
    } else if (type == "object") {
      args[name] = json::object();
    } else if (type == "null") {
      args[name] = nullptr;
    } else {
      args[name] = marker;
    }
  }
  return args;
}

namespace {

bool has_marker(const json& payload, const std::vector<std::string>& markers) {
  std::string text = util::lower(payload.dump());
  return std::any_of(markers.begin(), markers.end(),
                     [&](const std::string& m) { return !m.empty() && text.find(m) != std::string::npos; });
}

}  // namespace

ProbeResult classify_response(const std::optional<json>& response, const std::vector<std::string>& markers) {
  if (!response) return ProbeResult::Timeout;
  const json& r = *response;
  if (r.contains("error")) {
    const json& err = r["error"];
    if (err.is_object() && err.contains("code") && err["code"].is_number_integer()) {
      auto code = err["code"].get<std::int64_t>();
      if (code == -32700 || (code >= -32603 && code <= -32600)) return ProbeResult::TransportError;
    }
    return has_marker(err, markers) ? ProbeResult::AuthorizationEnforced : ProbeResult::Inconclusive;
  }
  if (r.contains("result")) {
    const json& result = r["result"];
    if (result.is_object() && result.value("isError", false)) {
      return has_marker(result, markers) ? ProbeResult::AuthorizationEnforced : ProbeResult::Inconclusive;
    }
    return ProbeResult::ExecutedUnderExistingAuth;
  }
  return ProbeResult::Inconclusive;
}

ValidationOutcome invoke_tool(ServerSession& session, const std::string& name, const json& args,
                              const ValidatorOptions& options) {
  if (session.protocol_state() != ProtocolState::Initialized) {
    throw SessionStateError("tools/call requires an initialized session");
  }
  ValidationOutcome outcome;
  outcome.tool_name = name;
  outcome.arguments_used = args;
  auto begin = Clock::now();
  try {
    auto response = session.request("tools/call", {{"name", name}, {"arguments", args}}, options.probe_timeout);
    outcome.result = classify_response(response, options.auth_markers);
    if (response) outcome.raw_response = *response;
  } catch (const TransportError& e) {
    outcome.result = ProbeResult::TransportError;
    outcome.raw_response = {{"transport_error", e.what()}};
  }
  outcome.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - begin).count();
  return outcome;
}

Enforcement judge_enforcement(const std::vector<ValidationOutcome>& outcomes) {
  if (outcomes.empty()) throw InconsistentInput("judge_enforcement needs at least one outcome");
  bool all_enforced = true;
  for (const auto& o : outcomes) {
    if (o.result == ProbeResult::ExecutedUnderExistingAuth) return Enforcement::NotEnforced;
    all_enforced = all_enforced && o.result == ProbeResult::AuthorizationEnforced;
  }
  return all_enforced ? Enforcement::Enforced : Enforcement::Inconclusive;
}

Classification merge_enforcement(Classification c, Enforcement enforcement) {
  if (enforcement == Enforcement::NotEnforced) {
    if (c.verdict == Verdict::AuthCache || c.verdict == Verdict::AuthRuntime) {
      c.unconfirmed = false;
      c.rationale += "; a probe executed under existing authorization";
    } else if (c.verdict == Verdict::Secure) {
      c.diagnostics.push_back({DiagnosticKind::DynamicValidation,
                               "probe executed although every path is statically guarded", std::nullopt});
    }
  } else if (enforcement == Enforcement::Enforced) {
    bool bound = std::any_of(c.supporting_checks.begin(), c.supporting_checks.end(),
                             [](const AuthCheck& a) { return a.caller_bound; });
    if (c.verdict == Verdict::AuthRuntime && c.unconfirmed && bound) {
      c.verdict = Verdict::Secure;
      c.unconfirmed = false;
      c.unguarded_operations.clear();
      c.rationale = "caller-bound check enforced at run time for an unauthenticated probe";
    }
  }
  return c;
}

ServerValidation validate_server(const LaunchDescriptor& d, const std::vector<std::string>& tools,
                                 const ValidatorOptions& options) {
  ServerValidation v;
  auto budget_end = Clock::now() + options.server_budget;
  auto fail = [&](const std::string& message) {
    v.diagnostics.push_back({DiagnosticKind::DynamicValidation, message, std::nullopt});
  };
  std::optional<ServerSession> session;
  try {
    session.emplace(activate_server(d, options));
    v.endpoint = session->endpoint();
    v.negotiated_protocol_version = session->negotiated_protocol_version();
    v.advertised = list_tools(*session, options.probe_timeout);
  } catch (const EndpointNotAllowed&) {
    throw;
  } catch (const AnalysisError& e) {
    fail(e.what());
    if (session) v.traffic = session->captured_traffic();
    return v;
  }

  std::vector<std::string> targets = tools;
  if (targets.empty()) {
    for (const auto& t : v.advertised) targets.push_back(t.name);
  }
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (const auto& name : targets) {
    auto it = std::find_if(v.advertised.begin(), v.advertised.end(),
                           [&](const AdvertisedTool& t) { return t.name == name; });
    if (it == v.advertised.end()) {
      fail("tool " + name + " is not advertised by the server");
      continue;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(budget_end - Clock::now());
    ValidationOutcome outcome;
    if (remaining.count() <= 0) {
      outcome.tool_name = name;
      outcome.result = ProbeResult::Timeout;
      fail("validation budget exhausted before probing " + name);
    } else {
      ValidatorOptions probe = options;
      probe.probe_timeout = std::min(options.probe_timeout, remaining);
      outcome = invoke_tool(*session, name, probe_arguments(it->input_schema, options.probe_marker), probe);
    }
    v.outcomes[name].push_back(outcome);
    v.enforcement[name] = judge_enforcement(v.outcomes[name]);
  }
  v.traffic = session->captured_traffic();
  session->close();
  return v;
}

json to_json(const ValidationOutcome& o) {
  return {{"tool_name", o.tool_name},
          {"arguments_used", o.arguments_used},
          {"result", to_string(o.result)},
          {"raw_response", o.raw_response},
          {"elapsed_ms", o.elapsed_ms}};
}

}  // namespace mcpauth
