#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/catalog.hpp"
#include "govq/date_resolver.hpp"
#include "govq/intent.hpp"
#include "govq/query_model.hpp"
#include "govq/tabular.hpp"
#include "govq/viz_spec.hpp"

namespace govq {

struct SessionHint {
  /// Session-local date; anchors month and day names given without a year.
  dates::CivilDate today{std::chrono::year{1970}, std::chrono::January, std::chrono::day{1}};
  /// Frame of the previous turn, for follow-ups such as "and for last month?".
  std::optional<IntentFrame> previous;
};

struct BackendInfo {
  std::string name;
  bool deterministic = true;
};

struct DraftContext {
  std::string utterance;
  IntentFrame frame;
  const Catalog* catalog = nullptr;
  /// Rendered field definitions, usually from the gateway cache.
  std::string field_context;
  dates::DateRange range;
  std::vector<std::string> targets;
  /// Validation or execution error from the previous attempt.
  std::optional<std::string> previous_error;
  int attempt = 1;
};

/// The model seam. Implementations are stateless per call and safe to share.
class PlannerBackend {
 public:
  virtual ~PlannerBackend() = default;
  virtual BackendInfo info() const = 0;
  /// Throws UninterpretableIntent when the message names nothing to query.
  virtual IntentFrame parse_intent(std::string_view utterance, const Catalog& catalog, const SessionHint& hint) const = 0;
  /// Throws DraftError when the backend output cannot be read as a request.
  virtual AnalyticsRequest draft_request(const DraftContext& ctx) const = 0;
  virtual ChartConfig draft_chart(const TabularResult& result, ChartType type, const ChartContext& context) const = 0;
};

// ---- lexicon ----

struct MetricEntry {
  std::string metric;
  /// Select expression used in drafted requests.
  std::string select;
  std::string label;
  std::vector<std::string> phrases;
  /// "for calls", "for meetings" narrow this metric with a kind filter.
  bool accepts_kind_filter = false;
};

/// Phrase tables for the rule backend, loaded from data/lexicon.json.
struct Lexicon {
  std::vector<MetricEntry> metrics;
  std::vector<std::pair<std::string, std::string>> kinds;
  std::vector<std::pair<std::string, std::string>> grains;
  std::vector<std::pair<std::string, std::string>> dimensions;
  std::vector<std::pair<std::string, std::string>> charts;
  std::vector<std::string> ranking_words;
  std::vector<std::string> record_words;
  std::vector<std::string> knowledge_patterns;
  std::vector<std::string> record_columns;
  std::string default_select = "count:*:interactions";

  const MetricEntry* find(std::string_view metric) const;
  /// Human label for a metric name; the name itself when unknown.
  std::string label(std::string_view metric) const;

  static Lexicon from_json(const nlohmann::json& j);
  static Lexicon load(const std::filesystem::path& path);
};

// ---- date phrases ----

struct DatePhrase {
  std::size_t pos = 0;
  std::size_t len = 0;
  dates::DateExpr expr;
};

/// Non-overlapping date phrases in order of appearance.
std::vector<DatePhrase> find_date_phrases(std::string_view text, dates::CivilDate today);

// ---- rule backend ----

class RuleBackend : public PlannerBackend {
 public:
  explicit RuleBackend(Lexicon lexicon) : lex_(std::move(lexicon)) {}

  BackendInfo info() const override { return {"rule", true}; }
  IntentFrame parse_intent(std::string_view utterance, const Catalog& catalog, const SessionHint& hint) const override;
  AnalyticsRequest draft_request(const DraftContext& ctx) const override;
  ChartConfig draft_chart(const TabularResult& result, ChartType type, const ChartContext& context) const override;

  const Lexicon& lexicon() const { return lex_; }

 private:
  Lexicon lex_;
};

/// Select expression a rule draft uses for a metric name.
std::string select_for_metric(const Lexicon& lex, const Catalog& catalog, std::string_view metric);

}  // namespace govq
