#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace govq {

using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }
inline const double* as_number(const Cell& c) { return std::get_if<double>(&c); }
inline const std::string* as_string(const Cell& c) { return std::get_if<std::string>(&c); }

enum class ValueType { number, string, timestamp, duration_seconds, percentage };

std::string_view value_type_name(ValueType t);
std::optional<ValueType> parse_value_type(std::string_view text);
bool is_numeric(ValueType t);

/// Replacement for masked string cells. Numeric cells are masked to null.
inline constexpr std::string_view kMaskSentinel = "•••";

struct Column {
  std::string name;
  ValueType type = ValueType::number;
  /// Canonical origin of the column ("avg(duration)", "group(week)",
  /// "key(target_id)", ...), used to match columns independently of alias.
  std::string source;
  /// A time-bucket group key.
  bool temporal = false;
  /// Values are parts of a whole (counts and sums).
  bool additive = false;

  friend bool operator==(const Column&, const Column&) = default;
};

struct Provenance {
  std::string endpoint;
  std::string request_id;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct TabularResult {
  std::vector<Column> schema;
  std::vector<std::vector<Cell>> rows;
  Provenance provenance;
  std::set<std::string> masked_columns;
  /// Opaque per-row keys for masked columns so downstream consumers can tell
  /// masked values apart without seeing them. Never serialized.
  std::map<std::string, std::vector<std::string>> mask_keys;
  bool truncated = false;

  std::optional<std::size_t> column_index(std::string_view name) const;
};

/// Wire form: {"schema":[{"name","type"}], "rows":[[...]], "provenance":{...}, "masked_columns":[...]}.
nlohmann::json to_json(const TabularResult& result);
nlohmann::json cell_to_json(const Cell& c);
Cell cell_from_json(const nlohmann::json& j);
TabularResult tabular_from_json(const nlohmann::json& j);

/// "8905.0" for integral values, shortest round-trip form otherwise.
std::string format_number(double v);

}  // namespace govq
