#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/judge.hpp"
#include "govq/planner.hpp"

namespace govq {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct RemoteConfig {
  /// Full chat-completion URL, e.g. http://127.0.0.1:8088/v1/chat/completions.
  std::string url;
  std::string model = "default";
  std::string token;
  double temperature = 0.0;
  int timeout_ms = 30000;
  int retries_on_5xx = 2;
  int max_in_flight = 4;

  /// Unknown keys are rejected (ConfigError).
  static RemoteConfig from_json(const nlohmann::json& j);
  /// REMOTE_PLANNER_URL and REMOTE_PLANNER_TOKEN override the file values.
  void apply_environment();
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  /// Returns the assistant message text. Throws EndpointError on transport failure.
  virtual std::string complete(const std::vector<ChatMessage>& messages) const = 0;
};

/// Chat-completion over HTTP: {"model","messages","temperature"} in,
/// choices[0].message.content out.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(RemoteConfig config);
  std::string complete(const std::vector<ChatMessage>& messages) const override;

 private:
  RemoteConfig config_;
  std::string origin_;
  std::string path_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  mutable int in_flight_ = 0;
};

/// Drafts through a chat model using the prompt templates. Chart drafts that
/// fail the soundness check fall back to `chart_fallback`.
class RemoteBackend : public PlannerBackend {
 public:
  RemoteBackend(std::shared_ptr<const ChatTransport> transport, std::shared_ptr<const PlannerBackend> chart_fallback);

  BackendInfo info() const override { return {"remote", false}; }
  IntentFrame parse_intent(std::string_view utterance, const Catalog& catalog, const SessionHint& hint) const override;
  AnalyticsRequest draft_request(const DraftContext& ctx) const override;
  ChartConfig draft_chart(const TabularResult& result, ChartType type, const ChartContext& context) const override;

 private:
  std::shared_ptr<const ChatTransport> transport_;
  std::shared_ptr<const PlannerBackend> fallback_;
};

class RemoteJudge : public Judge {
 public:
  RemoteJudge(std::string name, std::shared_ptr<const ChatTransport> transport)
      : name_(std::move(name)), transport_(std::move(transport)) {}
  std::string name() const override { return name_; }
  JudgeVerdict judge(std::string_view query, const AnswerRecord& reference,
                     const AnswerRecord& candidate) const override;

 private:
  std::string name_;
  std::shared_ptr<const ChatTransport> transport_;
};

}  // namespace govq
