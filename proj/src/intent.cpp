#include "govq/intent.hpp"

#include "govq/errors.hpp"

namespace govq {

nlohmann::json to_json(const IntentFrame& f) {
  nlohmann::json breakdown = nlohmann::json::array();
  for (const GroupByKey& k : f.breakdown) breakdown.push_back(group_key_name(k));
  nlohmann::json filters = nlohmann::json::array();
  for (const FilterClause& c : f.filters) filters.push_back(to_json(c));
  nlohmann::json j = {{"metrics", f.metrics},
                      {"date_expr", nullptr},
                      {"target_phrases", f.target_phrases},
                      {"breakdown", std::move(breakdown)},
                      {"filters", std::move(filters)},
                      {"ranking", f.ranking},
                      {"list_records", f.list_records},
                      {"knowledge_query", f.knowledge_query},
                      {"wants_viz", nullptr},
                      {"ambiguity_note", nullptr}};
  if (f.date_expr) j["date_expr"] = dates::to_json(*f.date_expr);
  if (f.wants_viz) j["wants_viz"] = chart_type_name(*f.wants_viz);
  if (f.ambiguity_note) j["ambiguity_note"] = *f.ambiguity_note;
  return j;
}

IntentFrame intent_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("intent must be a JSON object");
  try {
    IntentFrame f;
    f.metrics = j.value("metrics", std::vector<std::string>{});
    if (j.contains("date_expr") && !j["date_expr"].is_null()) f.date_expr = dates::date_expr_from_json(j["date_expr"]);
    f.target_phrases = j.value("target_phrases", std::vector<std::string>{});
    for (const auto& k : j.value("breakdown", nlohmann::json::array())) {
      f.breakdown.push_back(parse_group_key(k.get<std::string>()));
    }
    for (const auto& c : j.value("filters", nlohmann::json::array())) f.filters.push_back(filter_from_json(c));
    f.ranking = j.value("ranking", false);
    f.list_records = j.value("list_records", false);
    f.knowledge_query = j.value("knowledge_query", false);
    if (j.contains("wants_viz") && !j["wants_viz"].is_null()) {
      const std::string t = j["wants_viz"].get<std::string>();
      f.wants_viz = parse_chart_type(t);
      if (!f.wants_viz) throw ParseError("unknown chart type: " + t);
    }
    if (j.contains("ambiguity_note") && !j["ambiguity_note"].is_null()) {
      f.ambiguity_note = j["ambiguity_note"].get<std::string>();
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed intent: ") + e.what());
  }
}

}  // namespace govq
