#include "govq/query_model.hpp"

#include <algorithm>
#include <set>

#include "govq/errors.hpp"
#include "govq/intent.hpp"
#include "govq/util.hpp"

namespace govq {

std::string_view endpoint_name(Endpoint e) {
  switch (e) {
    case Endpoint::aggregate_metrics:
      return "aggregate_metrics";
    case Endpoint::leaderboard:
      return "leaderboard";
    case Endpoint::timeseries:
      return "timeseries";
    case Endpoint::records:
      return "records";
  }
  return "aggregate_metrics";
}

std::optional<Endpoint> parse_endpoint(std::string_view text) {
  if (text == "aggregate_metrics") return Endpoint::aggregate_metrics;
  if (text == "leaderboard") return Endpoint::leaderboard;
  if (text == "timeseries") return Endpoint::timeseries;
  if (text == "records") return Endpoint::records;
  return std::nullopt;
}

std::string SelectExpr::canonical() const {
  return std::visit(
      [this](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
          return "col:" + s.field + (output_alias == s.field ? "" : " as " + output_alias);
        } else if constexpr (std::is_same_v<T, ComputedRef>) {
          return s.name + (output_alias == s.name ? "" : " as " + output_alias);
        } else {
          return std::string(agg_name(s.fn)) + ":" + s.field + ":" + output_alias;
        }
      },
      source);
}

std::string SelectExpr::source_key() const {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ColumnRef>) {
          return "col(" + s.field + ")";
        } else if constexpr (std::is_same_v<T, ComputedRef>) {
          return "computed(" + s.name + ")";
        } else {
          return std::string(agg_name(s.fn)) + "(" + s.field + ")";
        }
      },
      source);
}

std::string_view filter_op_name(FilterOp op) {
  switch (op) {
    case FilterOp::eq:
      return "eq";
    case FilterOp::in:
      return "in";
    case FilterOp::gte:
      return "gte";
    case FilterOp::lt:
      return "lt";
  }
  return "eq";
}

std::optional<FilterOp> parse_filter_op(std::string_view text) {
  if (text == "eq") return FilterOp::eq;
  if (text == "in") return FilterOp::in;
  if (text == "gte") return FilterOp::gte;
  if (text == "lt") return FilterOp::lt;
  return std::nullopt;
}

nlohmann::json to_json(const FilterClause& f) {
  nlohmann::json value;
  if (f.op == FilterOp::in) {
    value = nlohmann::json::array();
    for (const Cell& c : f.values) value.push_back(cell_to_json(c));
  } else {
    value = f.values.empty() ? nlohmann::json(nullptr) : cell_to_json(f.values.front());
  }
  return {{"field", f.field}, {"op", filter_op_name(f.op)}, {"value", std::move(value)}};
}

FilterClause filter_from_json(const nlohmann::json& j) {
  try {
    FilterClause f;
    f.field = util::to_lower(j.at("field").get<std::string>());
    const std::string op = util::to_lower(j.at("op").get<std::string>());
    auto parsed = parse_filter_op(op);
    if (!parsed) throw ParseError("unknown filter operator: " + op);
    f.op = *parsed;
    const auto& v = j.at("value");
    if (v.is_array()) {
      for (const auto& item : v) f.values.push_back(cell_from_json(item));
    } else if (!v.is_null()) {
      f.values.push_back(cell_from_json(v));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed filter: ") + e.what());
  }
}

std::string group_key_name(const GroupByKey& k) {
  if (const auto* g = std::get_if<TimeGrain>(&k)) return std::string(dates::grain_name(g->grain));
  return std::get<Dimension>(k).field;
}

GroupByKey parse_group_key(std::string_view text) {
  std::string t = util::normalize_space(text);
  if (auto g = dates::parse_grain(t)) return TimeGrain{*g};
  if (t.rfind("col:", 0) == 0) t = t.substr(4);
  return Dimension{t};
}

// ---- wire form ----

nlohmann::json to_json(const AnalyticsRequest& r) {
  nlohmann::json filters = nlohmann::json::array();
  for (const FilterClause& f : r.filters) filters.push_back(to_json(f));
  nlohmann::json order = nlohmann::json::array();
  for (const OrderBy& o : r.order_by) {
    order.push_back({{"alias", o.alias}, {"dir", o.dir == SortDir::asc ? "asc" : "desc"}});
  }
  return {{"endpoint", r.endpoint},
          {"request_body",
           {{"select", r.select},
            {"where",
             {{"date_range", {r.start_date, r.end_date}},
              {"timezone", r.timezone},
              {"targets", r.targets},
              {"filters", std::move(filters)}}},
            {"group_by", r.group_by},
            {"order_by", std::move(order)}}},
          {"explanation", r.explanation}};
}

namespace {

OrderBy order_from_json(const nlohmann::json& j) {
  OrderBy o;
  std::string dir = "desc";
  if (j.is_string()) {
    auto parts = util::split(util::normalize_space(j.get<std::string>()), ' ');
    o.alias = parts.front();
    if (parts.size() > 1) dir = parts[1];
  } else {
    o.alias = util::to_lower(j.at("alias").get<std::string>());
    dir = util::to_lower(j.value("dir", std::string("desc")));
  }
  if (dir == "asc") {
    o.dir = SortDir::asc;
  } else if (dir == "desc") {
    o.dir = SortDir::desc;
  } else {
    throw ParseError("unknown sort direction: " + dir);
  }
  return o;
}

}  // namespace

AnalyticsRequest request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("analytics request must be a JSON object");
  try {
    AnalyticsRequest r;
    r.endpoint = j.at("endpoint").get<std::string>();
    const auto& body = j.at("request_body");
    if (!body.is_object()) throw ParseError("request_body must be an object");
    r.select = body.value("select", std::vector<std::string>{});
    if (body.contains("where")) {
      const auto& where = body["where"];
      if (where.contains("date_range")) {
        const auto& dr = where["date_range"];
        if (dr.is_array()) {
          if (dr.size() != 2) throw ParseError("date_range must have two entries");
          r.start_date = dr[0].get<std::string>();
          r.end_date = dr[1].get<std::string>();
        } else {
          r.start_date = dr.at("start_date").get<std::string>();
          r.end_date = dr.at("end_date").get<std::string>();
        }
      }
      r.timezone = where.value("timezone", std::string("UTC"));
      r.targets = where.value("targets", std::vector<std::string>{});
      for (const auto& f : where.value("filters", nlohmann::json::array())) r.filters.push_back(filter_from_json(f));
    }
    r.group_by = body.value("group_by", std::vector<std::string>{});
    for (const auto& o : body.value("order_by", nlohmann::json::array())) r.order_by.push_back(order_from_json(o));
    r.explanation = j.value("explanation", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed analytics request: ") + e.what());
  }
}

// ---- validation ----

std::string_view validation_kind_name(ValidationErrorKind k) {
  switch (k) {
    case ValidationErrorKind::UnknownEndpoint:
      return "UnknownEndpoint";
    case ValidationErrorKind::UnknownField:
      return "UnknownField";
    case ValidationErrorKind::BadAlias:
      return "BadAlias";
    case ValidationErrorKind::BadDateRange:
      return "BadDateRange";
    case ValidationErrorKind::BadGroupBy:
      return "BadGroupBy";
    case ValidationErrorKind::DanglingOrderBy:
      return "DanglingOrderBy";
    case ValidationErrorKind::EmptySelect:
      return "EmptySelect";
    case ValidationErrorKind::BadFilter:
      return "BadFilter";
  }
  return "BadAlias";
}

std::string ValidationError::message() const {
  return std::string(validation_kind_name(kind)) + ": " + detail;
}

namespace {

ValidationError fail(ValidationErrorKind k, std::string detail) { return {k, std::move(detail)}; }

}  // namespace

SelectParse parse_select(std::string_view text, const Catalog& catalog) {
  const std::string norm = util::normalize_space(text);
  if (norm.empty()) return fail(ValidationErrorKind::BadAlias, "empty select expression");

  std::string body = norm;
  std::optional<std::string> alias;
  if (const auto pos = norm.find(" as "); pos != std::string::npos) {
    body = util::trim(norm.substr(0, pos));
    alias = util::trim(norm.substr(pos + 4));
    if (!util::is_identifier(*alias)) return fail(ValidationErrorKind::BadAlias, "alias is not an identifier: '" + *alias + "'");
  }
  if (body.find(' ') != std::string::npos) {
    return fail(ValidationErrorKind::BadAlias, "unexpected whitespace in select expression '" + norm + "'");
  }

  SelectExpr out;
  out.raw = std::string(text);

  if (body.rfind("col:", 0) == 0) {
    const std::string field = body.substr(4);
    const FieldDef* def = catalog.find(field);
    if (!def || def->kind != FieldKind::column) return fail(ValidationErrorKind::UnknownField, "unknown column field '" + field + "'");
    out.source = ColumnRef{field};
    out.output_alias = alias.value_or(field);
    return out;
  }

  const auto colons = std::count(body.begin(), body.end(), ':');
  if (colons == 0) {
    const FieldDef* def = catalog.find(body);
    if (!def) return fail(ValidationErrorKind::UnknownField, "unknown field '" + body + "'");
    if (def->kind != FieldKind::computed) {
      return fail(ValidationErrorKind::UnknownField, "'" + body + "' is a column field; reference it as col:" + body);
    }
    out.source = ComputedRef{body};
    out.output_alias = alias.value_or(body);
    return out;
  }
  if (colons != 2) {
    return fail(ValidationErrorKind::BadAlias, "parameterized aggregate must be fn:field:alias, got '" + body + "'");
  }
  const auto parts = util::split(body, ':');
  const auto fn = parse_agg(parts[0]);
  if (!fn) return fail(ValidationErrorKind::BadAlias, "unknown aggregation function '" + parts[0] + "'");
  if (!util::is_identifier(parts[2])) return fail(ValidationErrorKind::BadAlias, "alias is not an identifier: '" + parts[2] + "'");
  if (parts[1] == "*") {
    if (*fn != AggFn::count) return fail(ValidationErrorKind::BadAlias, "'*' is only valid with count");
  } else {
    const FieldDef* def = catalog.find(parts[1]);
    if (!def || def->kind != FieldKind::column) return fail(ValidationErrorKind::UnknownField, "unknown column field '" + parts[1] + "'");
    if (!def->aggregatable_with.count(*fn)) {
      return fail(ValidationErrorKind::BadAlias, "'" + parts[0] + "' is not allowed on field '" + parts[1] + "'");
    }
  }
  out.source = ParamAgg{*fn, parts[1]};
  out.output_alias = alias.value_or(parts[2]);
  return out;
}

namespace {

std::optional<ValidationError> check_filter(const FilterClause& f, const Catalog& catalog) {
  const FieldDef* def = catalog.find(f.field);
  if (!def || def->kind != FieldKind::column) return fail(ValidationErrorKind::UnknownField, "unknown filter field '" + f.field + "'");
  if (f.values.empty()) return fail(ValidationErrorKind::BadFilter, "filter on '" + f.field + "' has no value");
  if (f.op != FilterOp::in && f.values.size() != 1) {
    return fail(ValidationErrorKind::BadFilter, std::string(filter_op_name(f.op)) + " takes exactly one value");
  }
  const bool ordered = is_numeric(def->value_type) || def->value_type == ValueType::timestamp;
  if ((f.op == FilterOp::gte || f.op == FilterOp::lt) && !ordered) {
    return fail(ValidationErrorKind::BadFilter, "'" + f.field + "' is not an ordered field");
  }
  for (const Cell& v : f.values) {
    if (is_numeric(def->value_type)) {
      if (!as_number(v)) return fail(ValidationErrorKind::BadFilter, "'" + f.field + "' expects numeric values");
    } else if (def->value_type == ValueType::timestamp) {
      const std::string* s = as_string(v);
      if (!s || !dates::parse_timestamp(*s)) {
        return fail(ValidationErrorKind::BadFilter, "'" + f.field + "' expects RFC 3339 timestamps");
      }
    } else if (!as_string(v)) {
      return fail(ValidationErrorKind::BadFilter, "'" + f.field + "' expects string values");
    }
  }
  return std::nullopt;
}

}  // namespace

ValidationResult validate(const AnalyticsRequest& request, const Catalog& catalog) {
  ValidatedRequest out;

  const auto endpoint = parse_endpoint(util::normalize_space(request.endpoint));
  if (!endpoint) return fail(ValidationErrorKind::UnknownEndpoint, "unknown endpoint '" + request.endpoint + "'");
  out.endpoint = *endpoint;

  if (request.select.empty()) return fail(ValidationErrorKind::EmptySelect, "select list is empty");
  std::set<std::string> aliases;
  for (const std::string& raw : request.select) {
    SelectParse parsed = parse_select(raw, catalog);
    if (auto* err = std::get_if<ValidationError>(&parsed)) return *err;
    SelectExpr expr = std::get<SelectExpr>(std::move(parsed));
    if (!aliases.insert(expr.output_alias).second) {
      return fail(ValidationErrorKind::BadAlias, "duplicate output alias '" + expr.output_alias + "'");
    }
    if (out.endpoint == Endpoint::records && !std::holds_alternative<ColumnRef>(expr.source)) {
      return fail(ValidationErrorKind::BadAlias, "records endpoint selects col: fields only, got '" + expr.canonical() + "'");
    }
    out.select.push_back(std::move(expr));
  }

  for (const FilterClause& f : request.filters) {
    if (auto err = check_filter(f, catalog)) return *err;
    out.filters.push_back(f);
  }

  const auto start = dates::parse_date(util::trim(request.start_date));
  const auto end = dates::parse_date(util::trim(request.end_date));
  if (!start || !end) {
    return fail(ValidationErrorKind::BadDateRange,
                "date_range needs two YYYY-MM-DD dates, got ['" + request.start_date + "', '" + request.end_date + "']");
  }
  if (std::chrono::sys_days{*end} <= std::chrono::sys_days{*start}) {
    return fail(ValidationErrorKind::BadDateRange, "End date must be after start date");
  }
  if (!dates::valid_timezone(request.timezone)) {
    return fail(ValidationErrorKind::BadDateRange, "unknown timezone '" + request.timezone + "'");
  }
  out.date_range = {*start, *end, request.timezone};

  int grains = 0;
  std::set<std::string> keys;
  for (const std::string& raw : request.group_by) {
    GroupByKey key = parse_group_key(raw);
    if (auto* dim = std::get_if<Dimension>(&key)) {
      const FieldDef* def = catalog.find(dim->field);
      if (!def || def->kind != FieldKind::column) return fail(ValidationErrorKind::UnknownField, "unknown group_by field '" + dim->field + "'");
      if (def->value_type != ValueType::string) {
        return fail(ValidationErrorKind::BadGroupBy, "cannot group by non-categorical field '" + dim->field + "'");
      }
    } else {
      ++grains;
    }
    if (!keys.insert(group_key_name(key)).second) return fail(ValidationErrorKind::BadGroupBy, "duplicate group_by key '" + raw + "'");
    out.group_by.push_back(std::move(key));
  }
  switch (out.endpoint) {
    case Endpoint::timeseries:
      if (grains != 1) return fail(ValidationErrorKind::BadGroupBy, "timeseries needs exactly one time grain in group_by");
      break;
    case Endpoint::aggregate_metrics:
      if (grains > 1) return fail(ValidationErrorKind::BadGroupBy, "at most one time grain per request");
      break;
    case Endpoint::leaderboard:
    case Endpoint::records:
      if (!out.group_by.empty()) {
        return fail(ValidationErrorKind::BadGroupBy, std::string(endpoint_name(out.endpoint)) + " does not accept group_by");
      }
      break;
  }
  if (out.endpoint != Endpoint::records) {
    for (const SelectExpr& s : out.select) {
      const auto* col = std::get_if<ColumnRef>(&s.source);
      if (col && !keys.count(col->field)) {
        return fail(ValidationErrorKind::BadGroupBy, "column '" + col->field + "' must appear in group_by");
      }
    }
  }

  for (const OrderBy& o : request.order_by) {
    if (!aliases.count(o.alias)) return fail(ValidationErrorKind::DanglingOrderBy, "order_by alias '" + o.alias + "' is not selected");
    out.order_by.push_back(o);
  }

  std::set<std::string> targets(request.targets.begin(), request.targets.end());
  out.targets.assign(targets.begin(), targets.end());
  out.explanation = request.explanation;
  return out;
}

AnalyticsRequest ValidatedRequest::to_request() const {
  AnalyticsRequest r;
  r.endpoint = std::string(endpoint_name(endpoint));
  for (const SelectExpr& s : select) r.select.push_back(s.canonical());
  r.start_date = dates::format_date(date_range.start);
  r.end_date = dates::format_date(date_range.end);
  r.timezone = date_range.tz;
  r.targets = targets;
  r.filters = filters;
  for (const GroupByKey& k : group_by) r.group_by.push_back(group_key_name(k));
  r.order_by = order_by;
  r.explanation = explanation;
  return r;
}

std::string ValidatedRequest::request_id() const {
  AnalyticsRequest r = to_request();
  r.explanation.clear();
  return util::hash_hex(to_json(r).dump());
}

Endpoint classify_endpoint(const IntentFrame& intent) {
  if (intent.ranking) return Endpoint::leaderboard;
  for (const GroupByKey& k : intent.breakdown) {
    if (std::holds_alternative<TimeGrain>(k)) return Endpoint::timeseries;
  }
  if (intent.list_records) return Endpoint::records;
  return Endpoint::aggregate_metrics;
}

}  // namespace govq
