#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/catalog.hpp"
#include "govq/date_resolver.hpp"
#include "govq/tabular.hpp"

namespace govq {

struct IntentFrame;

enum class Endpoint { aggregate_metrics, leaderboard, timeseries, records };

std::string_view endpoint_name(Endpoint e);
std::optional<Endpoint> parse_endpoint(std::string_view text);

// ---- select expressions ----

struct ColumnRef {
  std::string field;
  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};
struct ComputedRef {
  std::string name;
  friend bool operator==(const ComputedRef&, const ComputedRef&) = default;
};
/// `fn:field:alias`; field "*" (count only) counts rows.
struct ParamAgg {
  AggFn fn = AggFn::count;
  std::string field;
  friend bool operator==(const ParamAgg&, const ParamAgg&) = default;
};

using SelectSource = std::variant<ColumnRef, ComputedRef, ParamAgg>;

struct SelectExpr {
  std::string raw;
  SelectSource source;
  std::string output_alias;

  /// Lowercased, single spaces around `as`, alias omitted when it equals the default.
  std::string canonical() const;
  /// Alias-independent identity such as "avg(duration)" or "computed(deflection_rate)".
  std::string source_key() const;

  friend bool operator==(const SelectExpr& a, const SelectExpr& b) {
    return a.source == b.source && a.output_alias == b.output_alias;
  }
};

// ---- where / group_by / order_by ----

enum class FilterOp { eq, in, gte, lt };
std::string_view filter_op_name(FilterOp op);
std::optional<FilterOp> parse_filter_op(std::string_view text);

struct FilterClause {
  std::string field;
  FilterOp op = FilterOp::eq;
  /// One value for eq/gte/lt, one or more for in.
  std::vector<Cell> values;

  friend bool operator==(const FilterClause&, const FilterClause&) = default;
};

nlohmann::json to_json(const FilterClause& f);
FilterClause filter_from_json(const nlohmann::json& j);

struct TimeGrain {
  dates::Grain grain = dates::Grain::day;
  friend bool operator==(const TimeGrain&, const TimeGrain&) = default;
};
struct Dimension {
  std::string field;
  friend bool operator==(const Dimension&, const Dimension&) = default;
};
using GroupByKey = std::variant<TimeGrain, Dimension>;

std::string group_key_name(const GroupByKey& k);
/// "hour".."month" are grains; anything else (optionally `col:`-prefixed) is a dimension.
GroupByKey parse_group_key(std::string_view text);

enum class SortDir { asc, desc };

struct OrderBy {
  std::string alias;
  SortDir dir = SortDir::desc;
  friend bool operator==(const OrderBy&, const OrderBy&) = default;
};

/// An unvalidated request as drafted by a planner or received over the wire.
/// Every field is kept in its textual form so that any drafted payload is
/// representable and validation decides what is wrong with it.
struct AnalyticsRequest {
  std::string endpoint;
  std::vector<std::string> select;
  std::string start_date;
  std::string end_date;
  std::string timezone = "UTC";
  std::vector<std::string> targets;
  std::vector<FilterClause> filters;
  std::vector<std::string> group_by;
  std::vector<OrderBy> order_by;
  std::string explanation;

  friend bool operator==(const AnalyticsRequest&, const AnalyticsRequest&) = default;
};

/// {"endpoint", "request_body": {"select","where","group_by","order_by"}, "explanation"}
nlohmann::json to_json(const AnalyticsRequest& r);
/// Throws ParseError when the JSON does not have the wire shape.
AnalyticsRequest request_from_json(const nlohmann::json& j);

// ---- validation ----

enum class ValidationErrorKind {
  UnknownEndpoint,
  UnknownField,
  BadAlias,
  BadDateRange,
  BadGroupBy,
  DanglingOrderBy,
  EmptySelect,
  BadFilter,
};

std::string_view validation_kind_name(ValidationErrorKind k);

/// BadDateRange and DanglingOrderBy can be repaired without the planner.
constexpr bool recoverable_programmatically(ValidationErrorKind k) {
  return k == ValidationErrorKind::BadDateRange || k == ValidationErrorKind::DanglingOrderBy;
}

struct ValidationError {
  ValidationErrorKind kind;
  std::string detail;

  bool recoverable() const { return recoverable_programmatically(kind); }
  std::string message() const;
};

struct ValidatedRequest {
  Endpoint endpoint = Endpoint::aggregate_metrics;
  std::vector<SelectExpr> select;
  dates::DateRange date_range;
  /// Sorted, unique.
  std::vector<std::string> targets;
  std::vector<FilterClause> filters;
  std::vector<GroupByKey> group_by;
  std::vector<OrderBy> order_by;
  std::string explanation;

  AnalyticsRequest to_request() const;
  /// Stable id derived from the canonical wire form.
  std::string request_id() const;

  friend bool operator==(const ValidatedRequest&, const ValidatedRequest&) = default;
};

using SelectParse = std::variant<SelectExpr, ValidationError>;
using ValidationResult = std::variant<ValidatedRequest, ValidationError>;

SelectParse parse_select(std::string_view text, const Catalog& catalog);

/// Checks run in a fixed order (endpoint, select, filters, dates, group_by,
/// order_by) and the first failure is reported. Side-effect free.
ValidationResult validate(const AnalyticsRequest& request, const Catalog& catalog);

/// Rule order: ranking, time-grain breakdown, individual records, aggregate.
Endpoint classify_endpoint(const IntentFrame& intent);

}  // namespace govq
