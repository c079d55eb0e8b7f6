#include "govq/gateway.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <httplib.h>

#include "govq/errors.hpp"
#include "govq/guardrails.hpp"
#include "govq/prompts.hpp"
#include "govq/target_resolver.hpp"
#include "govq/util.hpp"

namespace govq {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key " + where + (where.empty() ? "" : ".") + k);
  }
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path;
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"listen", "dataset", "lexicon", "session_dir", "session_ttl_seconds", "timezone", "now", "planner",
                     "cache", "auth", "record_limit"},
                 "");
  ServiceConfig c;
  try {
    if (j.contains("listen")) {
      const auto& l = j["listen"];
      reject_unknown(l, {"host", "port"}, "listen");
      c.host = l.value("host", c.host);
      c.port = l.value("port", c.port);
    }
    if (!j.contains("dataset")) throw ConfigError("dataset is required");
    c.dataset = resolve_path(base_dir, j["dataset"].get<std::string>());
    if (j.contains("lexicon")) c.lexicon = resolve_path(base_dir, j["lexicon"].get<std::string>());
    if (j.contains("session_dir")) c.session_dir = resolve_path(base_dir, j["session_dir"].get<std::string>());
    c.session_ttl_seconds = j.value("session_ttl_seconds", c.session_ttl_seconds);
    c.timezone = j.value("timezone", c.timezone);
    c.record_limit = j.value("record_limit", c.record_limit);
    if (j.contains("now") && !j["now"].is_null()) {
      auto t = dates::parse_timestamp(j["now"].get<std::string>());
      if (!t) throw ConfigError("now must be an ISO timestamp such as 2025-06-18T17:00:00Z");
      c.now = *t;
    }
    if (j.contains("planner")) {
      const auto& p = j["planner"];
      reject_unknown(p, {"backend", "remote"}, "planner");
      c.planner_backend = p.value("backend", c.planner_backend);
      if (p.contains("remote")) c.remote = RemoteConfig::from_json(p["remote"]);
    }
    if (j.contains("cache")) {
      const auto& cc = j["cache"];
      reject_unknown(cc, {"enabled", "ttl_seconds"}, "cache");
      c.cache_enabled = cc.value("enabled", c.cache_enabled);
      c.cache_ttl_seconds = cc.value("ttl_seconds", c.cache_ttl_seconds);
    }
    if (j.contains("auth")) {
      const auto& a = j["auth"];
      reject_unknown(a, {"mode", "tokens"}, "auth");
      c.auth_mode = a.value("mode", c.auth_mode);
      for (const auto& t : a.value("tokens", nlohmann::json::array())) {
        reject_unknown(t, {"token", "user_id", "grants", "capabilities"}, "auth.tokens[]");
        TokenGrant g;
        g.token = t.at("token").get<std::string>();
        g.user_id = t.at("user_id").get<std::string>();
        g.grants = t.value("grants", std::vector<std::string>{});
        g.capabilities = t.value("capabilities", std::set<std::string>{});
        c.tokens.push_back(std::move(g));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.port < 0 || c.port > 65535) throw ConfigError("listen.port out of range");
  if (c.session_ttl_seconds <= 0) throw ConfigError("session_ttl_seconds must be positive");
  if (c.cache_ttl_seconds <= 0) throw ConfigError("cache.ttl_seconds must be positive");
  if (c.record_limit <= 0) throw ConfigError("record_limit must be positive");
  if (!dates::valid_timezone(c.timezone)) throw ConfigError("unknown timezone " + c.timezone);
  if (c.planner_backend != "rule" && c.planner_backend != "remote") {
    throw ConfigError("planner.backend must be rule or remote");
  }
  if (c.planner_backend == "remote" && !c.remote) c.remote = RemoteConfig{};
  if (c.auth_mode != "static_tokens") throw ConfigError("auth.mode must be static_tokens");
  std::set<std::string> seen;
  for (const TokenGrant& g : c.tokens) {
    if (g.token.empty()) throw ConfigError("auth token must not be empty");
    if (!seen.insert(g.token).second) throw ConfigError("duplicate auth token");
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

// ---- cache ----

FieldDefCache::FieldDefCache(std::chrono::seconds ttl, std::function<dates::Instant()> clock, bool enabled)
    : ttl_(ttl), clock_(std::move(clock)), enabled_(enabled) {}

std::string FieldDefCache::get(const Dataset& dataset) {
  if (!enabled_) {
    misses_.fetch_add(1);
    renders_.fetch_add(1);
    return render_field_context(dataset.catalog);
  }
  const auto key = std::make_pair(dataset.org.tenant_id(), dataset.catalog.version());
  const dates::Instant now = clock_();
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it != entries_.end() && now - it->second.stored < ttl_) {
      hits_.fetch_add(1);
      return it->second.block;
    }
  }
  misses_.fetch_add(1);
  renders_.fetch_add(1);
  std::string block = render_field_context(dataset.catalog);
  std::lock_guard lock(mu_);
  entries_[key] = Entry{block, now};
  return block;
}

// ---- service ----

HttpReply error_reply(int status, std::string code, std::string message) {
  return {status, {{"error", {{"code", std::move(code)}, {"message", std::move(message)}}}}};
}

std::shared_ptr<const PlannerBackend> make_planner(const ServiceConfig& config) {
  const std::filesystem::path lexicon = config.lexicon.empty() ? std::filesystem::path(GOVQ_DEFAULT_LEXICON) : config.lexicon;
  auto rule = std::make_shared<const RuleBackend>(Lexicon::load(lexicon));
  if (config.planner_backend == "rule") return rule;
  RemoteConfig rc = config.remote.value_or(RemoteConfig{});
  rc.apply_environment();
  auto transport = std::make_shared<const HttpChatTransport>(rc);
  return std::make_shared<const RemoteBackend>(transport, rule);
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  auto ds = std::make_shared<const Dataset>(load_dataset(config_.dataset));
  init(std::move(ds), make_planner(config_));
}

Service::Service(ServiceConfig config, std::shared_ptr<const Dataset> dataset,
                 std::shared_ptr<const PlannerBackend> planner)
    : config_(std::move(config)) {
  init(std::move(dataset), std::move(planner));
}

void Service::init(std::shared_ptr<const Dataset> dataset, std::shared_ptr<const PlannerBackend> planner) {
  if (config_.now) {
    const dates::Instant fixed = *config_.now;
    clock_ = [fixed] { return fixed; };
  } else {
    clock_ = [] { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); };
  }
  holder_ = std::make_unique<DatasetHolder>(dataset);
  cache_ = std::make_unique<FieldDefCache>(std::chrono::seconds(config_.cache_ttl_seconds), clock_, config_.cache_enabled);

  OrchestratorDeps deps;
  DatasetHolder* holder = holder_.get();
  FieldDefCache* cache = cache_.get();
  deps.dataset = [holder] { return holder->get(); };
  deps.planner = std::move(planner);
  deps.field_context = [cache](const Dataset& d) { return cache->get(d); };
  deps.clock = clock_;
  deps.timezone = config_.timezone;
  deps.execute.record_limit = static_cast<std::size_t>(config_.record_limit);
  orchestrator_ = std::make_unique<Orchestrator>(std::move(deps));

  std::shared_ptr<SessionStore> store;
  if (config_.session_dir.empty()) {
    store = std::make_shared<InMemorySessionStore>();
  } else {
    store = std::make_shared<FileSessionStore>(config_.session_dir);
  }
  sessions_ = std::make_unique<SessionManager>(store, std::chrono::seconds(config_.session_ttl_seconds), clock_);

  for (const TokenGrant& g : config_.tokens) {
    principals_.emplace(g.token, make_principal(g.user_id, dataset->org, g.grants, g.capabilities));
  }
}

std::optional<Principal> Service::authenticate(const std::string& bearer) const {
  static const std::string kPrefix = "Bearer ";
  if (bearer.rfind(kPrefix, 0) != 0) return std::nullopt;
  auto it = principals_.find(bearer.substr(kPrefix.size()));
  if (it == principals_.end()) return std::nullopt;
  return it->second;
}

HttpReply Service::handle(const std::string& method, const std::string& path, const std::string& bearer,
                          const std::string& body, const std::map<std::string, std::string>& query) {
  static const std::regex kChat(R"(^/v1/chat/([^/]+)$)");
  static const std::regex kAnalytics(R"(^/v1/analytics/([^/]+)$)");
  static const std::regex kAudit(R"(^/v1/audit/([^/]+)$)");
  try {
    std::smatch m;
    const bool chat_route = std::regex_match(path, m, kChat);
    const bool analytics_route = !chat_route && std::regex_match(path, m, kAnalytics);
    const bool audit_route = !chat_route && !analytics_route && std::regex_match(path, m, kAudit);
    const bool fields_route = path == "/v1/fields";
    const bool search_route = path == "/v1/targets/search";
    if (!chat_route && !analytics_route && !audit_route && !fields_route && !search_route) {
      return error_reply(404, "not_found", "no such route");
    }
    const bool wants_post = chat_route || analytics_route;
    if (method != (wants_post ? "POST" : "GET")) return error_reply(405, "method_not_allowed", "method not allowed");

    auto principal = authenticate(bearer);
    if (!principal) return error_reply(401, "unauthorized", "missing or unknown bearer token");

    if (fields_route) return fields();
    if (search_route) {
      auto it = query.find("q");
      return search(*principal, it == query.end() ? std::string{} : it->second);
    }
    const std::string id = m[1];
    if (chat_route || audit_route) {
      if (!valid_session_id(id)) return error_reply(400, "bad_session_id", "session ids are 1-64 characters of [A-Za-z0-9_-]");
      return chat_route ? chat(*principal, id, body) : audit(*principal, id);
    }
    auto sid = query.find("session");
    std::string session_id = sid == query.end() ? "api-" + principal->user_id : sid->second;
    if (!valid_session_id(session_id)) return error_reply(400, "bad_session_id", "session ids are 1-64 characters of [A-Za-z0-9_-]");
    return analytics(*principal, id, body, session_id);
  } catch (const PermissionError&) {
    return error_reply(403, "forbidden", "not permitted");
  } catch (const std::exception&) {
    return error_reply(500, "internal", "internal error");
  }
}

HttpReply Service::chat(const Principal& p, const std::string& session_id, const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("utterance") || !j["utterance"].is_string()) {
    return error_reply(400, "bad_request", "body must be {\"utterance\": string}");
  }
  const std::string utterance = j["utterance"].get<std::string>();
  if (util::trim(utterance).empty()) return error_reply(400, "bad_request", "utterance must not be empty");
  TurnResult r = sessions_->run_turn(*orchestrator_, session_id, p, utterance);
  return {200, to_json(r.response)};
}

HttpReply Service::fields() {
  auto ds = holder_->get();
  return {200, {{"tenant_id", ds->org.tenant_id()},
                {"catalog_version", ds->catalog.version()},
                {"fields", ds->catalog.to_json()},
                {"context", cache_->get(*ds)}}};
}

HttpReply Service::analytics(const Principal& p, const std::string& endpoint, const std::string& body,
                             const std::string& session_id) {
  if (!parse_endpoint(endpoint)) return error_reply(404, "not_found", "unknown endpoint");
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return error_reply(400, "bad_request", "body must be a JSON object");
  if (!j.contains("endpoint")) j["endpoint"] = endpoint;
  AnalyticsRequest req;
  try {
    req = request_from_json(j);
  } catch (const ParseError& e) {
    return error_reply(400, "bad_request", e.what());
  }
  if (req.endpoint != endpoint) return error_reply(400, "bad_request", "body endpoint does not match the path");
  auto ds = holder_->get();
  const ValidationResult v = validate(req, ds->catalog);
  if (const auto* err = std::get_if<ValidationError>(&v)) {
    HttpReply r = error_reply(422, "validation_error", err->message());
    r.body["error"]["kind"] = validation_kind_name(err->kind);
    return r;
  }
  const auto& vr = std::get<ValidatedRequest>(v);
  try {
    TabularResult t = execute(vr, p, *ds, ExecuteOptions{static_cast<std::size_t>(config_.record_limit)});
    sessions_->record_audit(session_id, p,
                            {dates::format_timestamp(clock_()), Stage::Query, AuditEvent::ok,
                             "direct " + std::string(endpoint_name(vr.endpoint)) + " request " + vr.request_id()});
    return {200, to_json(t)};
  } catch (const PermissionError&) {
    sessions_->record_audit(session_id, p,
                            {dates::format_timestamp(clock_()), Stage::Query, AuditEvent::denied,
                             "direct " + std::string(endpoint_name(vr.endpoint)) + " request outside permitted scope"});
    return error_reply(403, "forbidden", "request names a target you are not permitted to query");
  }
}

HttpReply Service::search(const Principal& p, const std::string& q) {
  if (util::trim(q).empty()) return error_reply(400, "bad_request", "q must not be empty");
  auto ds = holder_->get();
  const ResolutionOutcome outcome = resolve_targets(q, ds->org, p);
  nlohmann::json out = {{"query", q}, {"outcome", "not_found"}, {"candidates", nlohmann::json::array()}};
  if (const auto* r = std::get_if<Resolved>(&outcome)) {
    out["outcome"] = "resolved";
    for (const std::string& id : r->ids) {
      const OrgNode* n = ds->org.find(id);
      out["candidates"].push_back({{"id", id}, {"name", n ? n->name : id}, {"score", 1.0}});
    }
  } else if (const auto* a = std::get_if<Ambiguous>(&outcome)) {
    out["outcome"] = "ambiguous";
    for (const Candidate& c : a->candidates) out["candidates"].push_back({{"id", c.id}, {"name", c.name}, {"score", c.score}});
  }
  // Denied reads the same as not_found so the response says nothing about forbidden targets.
  return {200, out};
}

HttpReply Service::audit(const Principal& p, const std::string& session_id) {
  auto s = sessions_->get(session_id);
  if (!s) return error_reply(404, "not_found", "no such session");
  if (s->principal.user_id != p.user_id || s->principal.tenant_id != p.tenant_id) {
    return error_reply(403, "forbidden", "not permitted");
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const AuditEntry& e : s->audit) entries.push_back(to_json(e));
  return {200, {{"session_id", session_id}, {"entries", std::move(entries)}}};
}

// ---- socket layer ----

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    HttpReply r = impl_->service.handle(req.method, req.path, req.get_header_value("Authorization"), req.body, query);
    res.status = r.status;
    std::string text = r.body.dump();
    if (!outbound_clean(text)) {
      r = error_reply(500, "internal", "internal error");
      res.status = r.status;
      text = r.body.dump();
    }
    res.set_content(text, "application/json");
  };
  auto& s = impl_->server;
  s.Get(R"(/.*)", handler);
  s.Post(R"(/.*)", handler);
  s.Put(R"(/.*)", handler);
  s.Delete(R"(/.*)", handler);
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    res.status = 500;
    res.set_content(error_reply(500, "internal", "internal error").body.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw ConfigError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace govq
