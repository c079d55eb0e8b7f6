#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/catalog.hpp"
#include "govq/date_resolver.hpp"
#include "govq/org.hpp"
#include "govq/query_model.hpp"
#include "govq/tabular.hpp"

namespace govq {

enum class InteractionKind { call, text, voicemail, meeting, digital_session };
enum class Direction { inbound, outbound, internal };

inline constexpr std::array<InteractionKind, 5> kAllKinds = {
    InteractionKind::call, InteractionKind::text, InteractionKind::voicemail, InteractionKind::meeting,
    InteractionKind::digital_session};

std::string_view kind_name(InteractionKind k);
std::optional<InteractionKind> parse_kind(std::string_view text);
std::string_view direction_name(Direction d);
std::optional<Direction> parse_direction(std::string_view text);

struct InteractionRecord {
  std::string record_id;
  std::string tenant_id;
  std::string target_id;
  dates::Instant occurred_at{};
  InteractionKind kind = InteractionKind::call;
  Direction direction = Direction::inbound;
  double duration_seconds = 0;
  bool handled = false;
  std::optional<std::string> disposition;
  std::optional<std::string> channel;
  std::optional<double> csat_score;
  std::optional<double> ai_talk_time_pct;
  std::optional<double> resolution_time_seconds;
  std::optional<bool> deflected;

  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

nlohmann::json to_json(const InteractionRecord& r);
InteractionRecord record_from_json(const nlohmann::json& j);

struct Dataset {
  std::string tenant_id;
  Catalog catalog;
  std::vector<InteractionRecord> records;
  OrgIndex org;
};

/// Reads a bundle directory (catalog.json, org.json, records.jsonl) and checks
/// every cross-reference. Throws ParseError or IntegrityError.
Dataset load_dataset(const std::filesystem::path& bundle);
/// Runs the load-time integrity checks on an in-memory dataset.
void check_integrity(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& bundle);
/// records.jsonl contents, one record per line in dataset order.
std::string serialize_records(const Dataset& dataset);

// ---- computed metrics ----

/// Record predicate: field equals `expected`, or is present when `expected` is empty.
struct Condition {
  std::string field;
  std::optional<Cell> expected;
};

/// Built-in definition of a computed field.
///   count: records matching `where`
///   mean:  mean of non-null `value_field` over records matching `where`
///   ratio: records matching `where` and `numerator` / records matching `where`
struct MetricDef {
  enum class Op { count, mean, ratio };
  std::string name;
  Op op = Op::count;
  std::vector<Condition> where;
  std::string value_field;
  std::vector<Condition> numerator;

  std::vector<std::string> referenced_columns() const;
};

const std::vector<MetricDef>& metric_definitions();
const MetricDef* find_metric(std::string_view name);

/// Column fields a record exposes, in catalog order.
const std::vector<std::string>& record_columns();
Cell field_value(const InteractionRecord& r, std::string_view field, const OrgIndex& org);
bool matches(const InteractionRecord& r, const Condition& c, const OrgIndex& org);

Catalog default_catalog();

// ---- generation ----

struct OrgShape {
  std::string tenant_id = "acme";
  std::vector<OrgNode> nodes;
  dates::CivilDate start{std::chrono::year{2025}, std::chrono::January, std::chrono::day{1}};
  int days = 170;
};

/// Twelve-node org with offices, departments, a call center, teams and agent groups.
OrgShape default_org_shape();

/// Kind mix: call 45%, text 20%, digital_session 15%, voicemail 10%, meeting 10%.
/// Counts are exact (largest remainder), indexed like kAllKinds.
std::array<std::size_t, 5> kind_quota(std::size_t n_records);

/// Deterministic for a seed; records attach to leaf nodes and spread
/// uniformly over [start, start + days).
Dataset generate_dataset(std::uint64_t seed, std::size_t n_records, const OrgShape& shape = default_org_shape());

// ---- execution ----

struct ExecuteOptions {
  std::size_t record_limit = 500;
};

/// Runs a validated request under a principal. Throws PermissionError when any
/// requested target is outside the permitted set (the request is refused whole).
TabularResult execute(const ValidatedRequest& request, const Principal& principal, const Dataset& dataset,
                      const ExecuteOptions& options = {});

/// Field behind a column source such as "avg(csat_score)" or "group(channel)".
std::string source_field(std::string_view source);

/// Masks every column derived from a maskable field: strings become the
/// sentinel, numbers become null. Idempotent.
TabularResult mask_result(TabularResult result, const Catalog& catalog, std::string_view tenant_id);

/// Holds the live dataset; readers get an immutable snapshot, reload swaps it.
class DatasetHolder {
 public:
  explicit DatasetHolder(std::shared_ptr<const Dataset> initial) : current_(std::move(initial)) {}
  std::shared_ptr<const Dataset> get() const {
    std::lock_guard lock(mu_);
    return current_;
  }
  void reload(const std::filesystem::path& bundle) {
    auto next = std::make_shared<const Dataset>(load_dataset(bundle));
    std::lock_guard lock(mu_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Dataset> current_;
};

}  // namespace govq
