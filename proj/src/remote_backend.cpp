#include "govq/remote.hpp"

#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>

#include "govq/errors.hpp"
#include "govq/prompts.hpp"

namespace govq {

RemoteConfig RemoteConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {"url",          "model",          "token",        "temperature",
                                              "timeout_ms",   "retries_on_5xx", "max_in_flight"};
  if (!j.is_object()) throw ConfigError("planner.remote must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!kKeys.count(k)) throw ConfigError("unknown key planner.remote." + k);
  }
  try {
    RemoteConfig c;
    c.url = j.value("url", c.url);
    c.model = j.value("model", c.model);
    c.token = j.value("token", c.token);
    c.temperature = j.value("temperature", c.temperature);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.retries_on_5xx = j.value("retries_on_5xx", c.retries_on_5xx);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (c.timeout_ms <= 0 || c.retries_on_5xx < 0 || c.max_in_flight < 1) {
      throw ConfigError("planner.remote limits must be positive");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("planner.remote: ") + e.what());
  }
}

void RemoteConfig::apply_environment() {
  if (const char* u = std::getenv("REMOTE_PLANNER_URL"); u && *u) url = u;
  if (const char* t = std::getenv("REMOTE_PLANNER_TOKEN"); t && *t) token = t;
}

HttpChatTransport::HttpChatTransport(RemoteConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.url, m, kUrl)) throw ConfigError("remote planner url must be http(s)://host[:port]/path");
  origin_ = m[1];
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

std::string HttpChatTransport::complete(const std::vector<ChatMessage>& messages) const {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    const HttpChatTransport* t;
    ~Release() {
      {
        std::lock_guard lock(t->mu_);
        --t->in_flight_;
      }
      t->cv_.notify_one();
    }
  } release{this};

  nlohmann::json body = {{"model", config_.model}, {"temperature", config_.temperature}, {"messages", nlohmann::json::array()}};
  for (const ChatMessage& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Client client(origin_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count() + 1);
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count() + 1);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw EndpointError("chat endpoint unreachable: " + httplib::to_string(res.error()), true);
    if (res->status >= 500 && attempt < config_.retries_on_5xx) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
      continue;
    }
    if (res->status != 200) {
      throw EndpointError("chat endpoint returned HTTP " + std::to_string(res->status), res->status >= 500);
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw EndpointError("chat endpoint returned non-JSON body", false);
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw EndpointError("chat endpoint response lacks choices[0].message.content", false);
    }
  }
}

RemoteBackend::RemoteBackend(std::shared_ptr<const ChatTransport> transport,
                             std::shared_ptr<const PlannerBackend> chart_fallback)
    : transport_(std::move(transport)), fallback_(std::move(chart_fallback)) {
  if (!transport_) throw ConfigError("remote backend needs a transport");
}

IntentFrame RemoteBackend::parse_intent(std::string_view utterance, const Catalog&, const SessionHint& hint) const {
  const std::string reply =
      transport_->complete({{"system", intent_prompt()}, {"user", intent_user_message(utterance, hint.today)}});
  IntentFrame f;
  try {
    f = intent_from_json(extract_json_object(reply));
  } catch (const ParseError& e) {
    throw DraftError(std::string("intent output unreadable: ") + e.what());
  }
  if (f.metrics.empty() && !f.knowledge_query && hint.previous &&
      (f.date_expr || !f.target_phrases.empty() || !f.breakdown.empty())) {
    f.metrics = hint.previous->metrics;
    if (f.breakdown.empty()) f.breakdown = hint.previous->breakdown;
    if (f.filters.empty()) f.filters = hint.previous->filters;
  }
  if (!f.wellformed()) throw UninterpretableIntent("no metric or target in message");
  return f;
}

AnalyticsRequest RemoteBackend::draft_request(const DraftContext& ctx) const {
  const std::string user = query_user_message(ctx.utterance, to_json(ctx.frame).dump(), ctx.field_context, ctx.range,
                                              ctx.targets, ctx.previous_error);
  const std::string reply = transport_->complete({{"system", query_prompt()}, {"user", user}});
  try {
    return request_from_json(extract_json_object(reply));
  } catch (const ParseError& e) {
    throw DraftError(std::string("request output unreadable: ") + e.what());
  }
}

ChartConfig RemoteBackend::draft_chart(const TabularResult& result, ChartType type, const ChartContext& context) const {
  // The model picks channels and title only; data always comes from the result table.
  ChartConfig reference = build_chart_config(result, type, context);
  try {
    const std::string reply = transport_->complete(
        {{"system", viz_prompt()}, {"user", viz_user_message(result, chart_type_name(type), reference.title)}});
    ChartConfig drafted = chart_from_json(extract_json_object(reply));
    drafted.data = reference.data;
    drafted.truncated = reference.truncated;
    if (drafted.title.empty()) drafted.title = reference.title;
    if (channels_sound(drafted)) return drafted;
  } catch (const ParseError&) {
  } catch (const EndpointError&) {
  }
  return fallback_ ? fallback_->draft_chart(result, type, context) : reference;
}

JudgeVerdict RemoteJudge::judge(std::string_view query, const AnswerRecord& reference,
                                const AnswerRecord& candidate) const {
  std::string reply;
  try {
    reply = transport_->complete({{"system", judge_prompt()},
                                  {"user", judge_user_message(query, to_json(reference).dump(), to_json(candidate).dump())}});
  } catch (const EndpointError& e) {
    throw JudgeUnavailable(name_ + ": " + e.what());
  }
  try {
    return extract_verdict(reply);
  } catch (const ParseError& e) {
    throw JudgeUnavailable(name_ + ": unreadable verdict: " + e.what());
  }
}

}  // namespace govq
