#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/analytics_store.hpp"
#include "govq/intent.hpp"
#include "govq/org.hpp"
#include "govq/planner.hpp"
#include "govq/target_resolver.hpp"
#include "govq/viz_spec.hpp"

namespace govq {

enum class Stage { Parse, Targets, Query, Viz, Done };
enum class AuditEvent { ok, validation_error, exec_error, retry, clarify, refuse, denied };

std::string_view stage_name(Stage s);
std::string_view audit_event_name(AuditEvent e);

struct AuditEntry {
  std::string timestamp;
  Stage stage = Stage::Parse;
  AuditEvent event = AuditEvent::ok;
  /// Ids, field names and error kinds only; never record values.
  std::string detail;
  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

nlohmann::json to_json(const AuditEntry& e);
AuditEntry audit_from_json(const nlohmann::json& j);
/// One entry per line.
std::string audit_jsonl(const std::vector<AuditEntry>& entries);

struct Clarification {
  std::string question;
  std::vector<Candidate> candidates;
};

enum class ResponseStatus { answered, needs_clarification, refused, failed };
std::string_view status_name(ResponseStatus s);

struct AgentResponse {
  std::string text;
  std::optional<TabularResult> table;
  std::optional<ChartConfig> chart;
  std::optional<Clarification> clarification;
  ResponseStatus status = ResponseStatus::failed;
};

nlohmann::json to_json(const AgentResponse& r);

/// A question waiting for the user's pick, with everything needed to resume.
struct PendingClarification {
  std::string utterance;
  IntentFrame frame;
  dates::DateRange range;
  std::vector<std::string> resolved;
  std::vector<std::string> remaining_phrases;
  std::vector<Candidate> candidates;
};

struct SessionState {
  std::string session_id;
  Principal principal;
  std::vector<std::string> resolved_targets;
  std::optional<dates::DateRange> time_window;
  std::vector<nlohmann::json> turn_history;
  int clarification_count_this_flow = 0;
  std::vector<AuditEntry> audit;
  std::optional<PendingClarification> pending;
  std::optional<IntentFrame> last_frame;
  PseudonymTable pseudonyms;
  dates::Instant last_active{};
};

nlohmann::json to_json(const SessionState& s);
SessionState session_from_json(const nlohmann::json& j);
SessionState new_session(std::string session_id, Principal principal);

struct TurnResult {
  SessionState state;
  AgentResponse response;
  /// The request that produced the table, for evaluation.
  std::optional<ValidatedRequest> executed_request;
  int query_attempts = 0;
};

struct QueryOutcome {
  std::optional<TabularResult> table;
  std::optional<ValidatedRequest> request;
  int attempts = 0;
  bool permission_denied = false;
  std::string last_error;
};

struct OrchestratorDeps {
  std::function<std::shared_ptr<const Dataset>()> dataset;
  std::shared_ptr<const PlannerBackend> planner;
  /// Rendered field definitions for a dataset; defaults to rendering every time.
  std::function<std::string(const Dataset&)> field_context;
  std::function<dates::Instant()> clock;
  std::string timezone = "UTC";
  ExecuteOptions execute;
};

inline constexpr int kMaxQueryAttempts = 2;
inline constexpr int kClarificationBudget = 1;

class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorDeps deps);

  /// Never throws; failures become status=failed with an audited cause.
  TurnResult handle_turn(SessionState session, std::string_view utterance) const;

  /// At most kMaxQueryAttempts drafts. Tier-1 fixes run inside an attempt;
  /// anything else goes back to the planner with the error text.
  QueryOutcome run_query_stage(SessionState& session, const IntentFrame& frame, const std::vector<std::string>& targets,
                               const dates::DateRange& range, std::string_view utterance) const;

  const OrchestratorDeps& deps() const { return deps_; }

 private:
  void audit(SessionState& s, Stage stage, AuditEvent event, std::string detail) const;
  OrchestratorDeps deps_;
};

/// Closed list: swap reversed dates, widen an empty range to one day, drop
/// order_by entries that name no selected alias. Returns a description of the
/// fix, or nothing when none applies.
std::optional<std::string> apply_tier1_fix(AnalyticsRequest& request, const ValidationError& error,
                                           const Catalog& catalog);

struct SummaryContext {
  std::string metric_label;
  std::string scope;
  std::string window;
};

/// Deterministic one- or two-sentence summary; never contains JSON.
std::string synthesize_response(const TabularResult& result, const IntentFrame& frame, const SummaryContext& context);

/// "Apr 14 to Apr 20, 2025" style label for a half-open range.
std::string window_label(const dates::DateRange& range);

// ---- session storage ----

class SessionStore {
 public:
  virtual ~SessionStore() = default;
  virtual std::optional<SessionState> load(const std::string& id) = 0;
  virtual void save(const SessionState& state) = 0;
  virtual void erase(const std::string& id) = 0;
  virtual std::vector<std::string> ids() = 0;
};

class InMemorySessionStore : public SessionStore {
 public:
  std::optional<SessionState> load(const std::string& id) override;
  void save(const SessionState& state) override;
  void erase(const std::string& id) override;
  std::vector<std::string> ids() override;

 private:
  std::mutex mu_;
  std::map<std::string, SessionState> sessions_;
};

/// One JSON file per session under a directory.
class FileSessionStore : public SessionStore {
 public:
  explicit FileSessionStore(std::filesystem::path dir);
  std::optional<SessionState> load(const std::string& id) override;
  void save(const SessionState& state) override;
  void erase(const std::string& id) override;
  std::vector<std::string> ids() override;

 private:
  std::filesystem::path file_for(const std::string& id) const;
  std::filesystem::path dir_;
  std::mutex mu_;
};

/// Serializes turns per session, evicts idle sessions, and checks ownership.
class SessionManager {
 public:
  SessionManager(std::shared_ptr<SessionStore> store, std::chrono::seconds ttl,
                 std::function<dates::Instant()> clock);

  /// Throws PermissionError when the session belongs to another user.
  TurnResult run_turn(const Orchestrator& orchestrator, const std::string& session_id, const Principal& principal,
                      std::string_view utterance);
  std::optional<SessionState> get(const std::string& session_id);
  /// Appends an audit entry outside a chat turn, creating the session if needed.
  /// Throws PermissionError when the session belongs to another user.
  void record_audit(const std::string& session_id, const Principal& principal, AuditEntry entry);
  /// Drops sessions idle longer than the TTL; returns how many were dropped.
  std::size_t evict_idle();

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& id);
  std::shared_ptr<SessionStore> store_;
  std::chrono::seconds ttl_;
  std::function<dates::Instant()> clock_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

/// Session ids are 1-64 chars of [A-Za-z0-9_-].
bool valid_session_id(std::string_view id);

}  // namespace govq
