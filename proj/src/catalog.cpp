#include "govq/catalog.hpp"

#include "govq/errors.hpp"
#include "govq/util.hpp"

namespace govq {

std::string_view agg_name(AggFn fn) {
  switch (fn) {
    case AggFn::avg:
      return "avg";
    case AggFn::sum:
      return "sum";
    case AggFn::min:
      return "min";
    case AggFn::max:
      return "max";
    case AggFn::count:
      return "count";
  }
  return "count";
}

std::optional<AggFn> parse_agg(std::string_view text) {
  if (text == "avg") return AggFn::avg;
  if (text == "sum") return AggFn::sum;
  if (text == "min") return AggFn::min;
  if (text == "max") return AggFn::max;
  if (text == "count") return AggFn::count;
  return std::nullopt;
}

nlohmann::json to_json(const FieldDef& f) {
  nlohmann::json aggs = nlohmann::json::array();
  for (AggFn fn : f.aggregatable_with) aggs.push_back(agg_name(fn));
  return {{"name", f.name},
          {"kind", f.kind == FieldKind::column ? "column" : "computed"},
          {"value_type", value_type_name(f.value_type)},
          {"aggregatable_with", std::move(aggs)},
          {"maskable", f.maskable},
          {"description", f.description}};
}

FieldDef field_def_from_json(const nlohmann::json& j) {
  try {
    FieldDef f;
    f.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "column") {
      f.kind = FieldKind::column;
    } else if (kind == "computed") {
      f.kind = FieldKind::computed;
    } else {
      throw ParseError("unknown field kind '" + kind + "' for " + f.name);
    }
    auto vt = parse_value_type(j.at("value_type").get<std::string>());
    if (!vt) throw ParseError("unknown value_type for " + f.name);
    f.value_type = *vt;
    for (const auto& a : j.value("aggregatable_with", nlohmann::json::array())) {
      auto fn = parse_agg(a.get<std::string>());
      if (!fn) throw ParseError("unknown aggregation for " + f.name);
      f.aggregatable_with.insert(*fn);
    }
    f.maskable = j.value("maskable", false);
    f.description = j.value("description", "");
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed field definition: ") + e.what());
  }
}

Catalog::Catalog(std::vector<FieldDef> fields) : fields_(std::move(fields)) {
  std::set<std::string> seen;
  for (const FieldDef& f : fields_) {
    if (!util::is_identifier(f.name)) throw IntegrityError("field name is not an identifier: '" + f.name + "'");
    if (!seen.insert(f.name).second) throw IntegrityError("duplicate field name: " + f.name);
    if (f.kind == FieldKind::computed && !f.aggregatable_with.empty()) {
      throw IntegrityError("computed field must not declare aggregations: " + f.name);
    }
  }
  version_ = util::hash_hex(to_json().dump());
}

const FieldDef* Catalog::find(std::string_view name) const {
  for (const FieldDef& f : fields_) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

nlohmann::json Catalog::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const FieldDef& f : fields_) out.push_back(govq::to_json(f));
  return out;
}

Catalog Catalog::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("catalog must be a JSON array");
  std::vector<FieldDef> fields;
  for (const auto& f : j) fields.push_back(field_def_from_json(f));
  return Catalog(std::move(fields));
}

}  // namespace govq
