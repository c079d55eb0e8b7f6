#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/tabular.hpp"

namespace govq {

enum class FieldKind { column, computed };
enum class AggFn { avg, sum, min, max, count };

std::string_view agg_name(AggFn fn);
std::optional<AggFn> parse_agg(std::string_view text);

struct FieldDef {
  std::string name;
  FieldKind kind = FieldKind::column;
  ValueType value_type = ValueType::number;
  /// Empty for computed fields; they are referenced by alias directly.
  std::set<AggFn> aggregatable_with;
  bool maskable = false;
  std::string description;

  friend bool operator==(const FieldDef&, const FieldDef&) = default;
};

nlohmann::json to_json(const FieldDef& f);
FieldDef field_def_from_json(const nlohmann::json& j);

/// Field catalog of one tenant. Construction enforces unique identifier names
/// and empty aggregation sets on computed fields (throws IntegrityError).
class Catalog {
 public:
  Catalog() = default;
  explicit Catalog(std::vector<FieldDef> fields);

  const FieldDef* find(std::string_view name) const;
  const std::vector<FieldDef>& fields() const { return fields_; }
  /// Content hash; changes whenever any definition changes.
  const std::string& version() const { return version_; }

  nlohmann::json to_json() const;
  static Catalog from_json(const nlohmann::json& j);

 private:
  std::vector<FieldDef> fields_;
  std::string version_;
};

}  // namespace govq
