#include "govq/tabular.hpp"

#include <charconv>
#include <cmath>

#include "govq/errors.hpp"

namespace govq {

std::string_view value_type_name(ValueType t) {
  switch (t) {
    case ValueType::number:
      return "number";
    case ValueType::string:
      return "string";
    case ValueType::timestamp:
      return "timestamp";
    case ValueType::duration_seconds:
      return "duration_seconds";
    case ValueType::percentage:
      return "percentage";
  }
  return "number";
}

std::optional<ValueType> parse_value_type(std::string_view text) {
  if (text == "number") return ValueType::number;
  if (text == "string") return ValueType::string;
  if (text == "timestamp") return ValueType::timestamp;
  if (text == "duration_seconds") return ValueType::duration_seconds;
  if (text == "percentage") return ValueType::percentage;
  return std::nullopt;
}

bool is_numeric(ValueType t) {
  return t == ValueType::number || t == ValueType::duration_seconds || t == ValueType::percentage;
}

std::optional<std::size_t> TabularResult::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (schema[i].name == name) return i;
  }
  return std::nullopt;
}

nlohmann::json cell_to_json(const Cell& c) {
  if (const double* d = as_number(c)) return *d;
  if (const std::string* s = as_string(c)) return *s;
  return nullptr;
}

Cell cell_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_number()) return j.get<double>();
  if (j.is_boolean()) return j.get<bool>() ? 1.0 : 0.0;
  if (j.is_string()) return j.get<std::string>();
  throw ParseError("table cells must be scalars");
}

nlohmann::json to_json(const TabularResult& result) {
  nlohmann::json schema = nlohmann::json::array();
  for (const Column& c : result.schema) {
    schema.push_back({{"name", c.name}, {"type", value_type_name(c.type)}, {"source", c.source}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    nlohmann::json r = nlohmann::json::array();
    for (const Cell& c : row) r.push_back(cell_to_json(c));
    rows.push_back(std::move(r));
  }
  nlohmann::json out = {{"schema", std::move(schema)},
                        {"rows", std::move(rows)},
                        {"provenance", {{"endpoint", result.provenance.endpoint},
                                        {"request_id", result.provenance.request_id}}},
                        {"masked_columns", result.masked_columns}};
  if (result.truncated) out["truncated"] = true;
  return out;
}

TabularResult tabular_from_json(const nlohmann::json& j) {
  TabularResult r;
  try {
    for (const auto& c : j.at("schema")) {
      Column col;
      col.name = c.at("name").get<std::string>();
      auto t = parse_value_type(c.at("type").get<std::string>());
      if (!t) throw ParseError("unknown column type for " + col.name);
      col.type = *t;
      col.source = c.value("source", col.name);
      col.temporal = col.source.rfind("group(", 0) == 0 &&
                     (col.source == "group(hour)" || col.source == "group(day)" ||
                      col.source == "group(week)" || col.source == "group(month)");
      col.additive = col.source.rfind("count(", 0) == 0 || col.source.rfind("sum(", 0) == 0;
      r.schema.push_back(std::move(col));
    }
    for (const auto& row : j.at("rows")) {
      std::vector<Cell> cells;
      for (const auto& c : row) cells.push_back(cell_from_json(c));
      if (cells.size() != r.schema.size()) throw ParseError("row arity differs from schema arity");
      r.rows.push_back(std::move(cells));
    }
    if (j.contains("provenance")) {
      r.provenance.endpoint = j["provenance"].value("endpoint", "");
      r.provenance.request_id = j["provenance"].value("request_id", "");
    }
    if (j.contains("masked_columns")) r.masked_columns = j["masked_columns"].get<std::set<std::string>>();
    r.truncated = j.value("truncated", false);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed table: ") + e.what());
  }
  return r;
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(v));
    return std::string(buf, p) + ".0";
  }
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace govq
