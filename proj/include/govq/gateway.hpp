#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/analytics_store.hpp"
#include "govq/orchestrator.hpp"
#include "govq/remote.hpp"

namespace govq {

struct TokenGrant {
  std::string token;
  std::string user_id;
  std::vector<std::string> grants;
  std::set<std::string> capabilities;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path dataset;
  std::filesystem::path lexicon;
  /// Empty keeps sessions in memory.
  std::filesystem::path session_dir;
  int session_ttl_seconds = 1800;
  std::string timezone = "UTC";
  /// Pins the clock, for reproducible runs.
  std::optional<dates::Instant> now;
  std::string planner_backend = "rule";
  std::optional<RemoteConfig> remote;
  bool cache_enabled = true;
  int cache_ttl_seconds = 300;
  std::string auth_mode = "static_tokens";
  std::vector<TokenGrant> tokens;
  int record_limit = 500;

  /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& path);
};

/// Rendered field-definition blocks keyed by (tenant, catalog version).
class FieldDefCache {
 public:
  FieldDefCache(std::chrono::seconds ttl, std::function<dates::Instant()> clock, bool enabled = true);

  std::string get(const Dataset& dataset);

  std::uint64_t hits() const { return hits_.load(); }
  std::uint64_t misses() const { return misses_.load(); }
  std::uint64_t renders() const { return renders_.load(); }
  bool enabled() const { return enabled_; }

 private:
  struct Entry {
    std::string block;
    dates::Instant stored;
  };
  std::chrono::seconds ttl_;
  std::function<dates::Instant()> clock_;
  bool enabled_;
  std::mutex mu_;
  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> renders_{0};
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

/// Builds the planner a config asks for. The rule backend also serves as the
/// chart fallback for the remote one.
std::shared_ptr<const PlannerBackend> make_planner(const ServiceConfig& config);

/// All request handling, independent of the socket layer.
class Service {
 public:
  explicit Service(ServiceConfig config);
  /// For tests: inject a dataset and planner instead of loading from disk.
  Service(ServiceConfig config, std::shared_ptr<const Dataset> dataset, std::shared_ptr<const PlannerBackend> planner);

  /// `bearer` is the raw Authorization header value.
  HttpReply handle(const std::string& method, const std::string& path, const std::string& bearer,
                   const std::string& body, const std::map<std::string, std::string>& query = {});

  const ServiceConfig& config() const { return config_; }
  FieldDefCache& cache() { return *cache_; }
  SessionManager& sessions() { return *sessions_; }
  const Orchestrator& orchestrator() const { return *orchestrator_; }
  std::shared_ptr<const Dataset> dataset() const { return holder_->get(); }
  dates::Instant now() const { return clock_(); }

 private:
  void init(std::shared_ptr<const Dataset> dataset, std::shared_ptr<const PlannerBackend> planner);
  std::optional<Principal> authenticate(const std::string& bearer) const;
  HttpReply chat(const Principal& p, const std::string& session_id, const std::string& body);
  HttpReply fields();
  HttpReply analytics(const Principal& p, const std::string& endpoint, const std::string& body,
                      const std::string& session_id);
  HttpReply search(const Principal& p, const std::string& q);
  HttpReply audit(const Principal& p, const std::string& session_id);

  ServiceConfig config_;
  std::function<dates::Instant()> clock_;
  std::unique_ptr<DatasetHolder> holder_;
  std::unique_ptr<FieldDefCache> cache_;
  std::unique_ptr<Orchestrator> orchestrator_;
  std::unique_ptr<SessionManager> sessions_;
  std::map<std::string, Principal> principals_;
};

/// {"error": {"code", "message"}}
HttpReply error_reply(int status, std::string code, std::string message);

/// Blocks until stop() is called from another thread or a signal handler.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Port 0 picks a free port; returns the bound port.
  int bind(const std::string& host, int port);
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace govq
