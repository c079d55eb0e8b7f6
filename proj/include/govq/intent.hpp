#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/date_resolver.hpp"
#include "govq/query_model.hpp"
#include "govq/viz_spec.hpp"

namespace govq {

/// What the user asked for, before targets and dates are grounded.
struct IntentFrame {
  std::vector<std::string> metrics;
  std::optional<dates::DateExpr> date_expr;
  std::vector<std::string> target_phrases;
  std::vector<GroupByKey> breakdown;
  std::vector<FilterClause> filters;
  bool ranking = false;
  /// Individual rows rather than aggregates.
  bool list_records = false;
  /// Documentation question rather than an analytics request.
  bool knowledge_query = false;
  std::optional<ChartType> wants_viz;
  std::optional<std::string> ambiguity_note;

  bool wellformed() const { return knowledge_query || list_records || !metrics.empty() || !target_phrases.empty(); }

  friend bool operator==(const IntentFrame&, const IntentFrame&) = default;
};

nlohmann::json to_json(const IntentFrame& f);
/// Throws ParseError on schema violations.
IntentFrame intent_from_json(const nlohmann::json& j);

}  // namespace govq
