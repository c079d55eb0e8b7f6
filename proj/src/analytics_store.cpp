#include "govq/analytics_store.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "govq/errors.hpp"

namespace govq {

std::string_view kind_name(InteractionKind k) {
  switch (k) {
    case InteractionKind::call:
      return "call";
    case InteractionKind::text:
      return "text";
    case InteractionKind::voicemail:
      return "voicemail";
    case InteractionKind::meeting:
      return "meeting";
    case InteractionKind::digital_session:
      return "digital_session";
  }
  return "call";
}

std::optional<InteractionKind> parse_kind(std::string_view text) {
  for (InteractionKind k : kAllKinds) {
    if (kind_name(k) == text) return k;
  }
  return std::nullopt;
}

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::inbound:
      return "inbound";
    case Direction::outbound:
      return "outbound";
    case Direction::internal:
      return "internal";
  }
  return "inbound";
}

std::optional<Direction> parse_direction(std::string_view text) {
  if (text == "inbound") return Direction::inbound;
  if (text == "outbound") return Direction::outbound;
  if (text == "internal") return Direction::internal;
  return std::nullopt;
}

nlohmann::json to_json(const InteractionRecord& r) {
  nlohmann::json j = {{"record_id", r.record_id},
                      {"tenant_id", r.tenant_id},
                      {"target_id", r.target_id},
                      {"occurred_at", dates::format_timestamp(r.occurred_at)},
                      {"kind", kind_name(r.kind)},
                      {"direction", direction_name(r.direction)},
                      {"duration_seconds", r.duration_seconds},
                      {"handled", r.handled}};
  if (r.disposition) j["disposition"] = *r.disposition;
  if (r.channel) j["channel"] = *r.channel;
  if (r.csat_score) j["csat_score"] = *r.csat_score;
  if (r.ai_talk_time_pct) j["ai_talk_time_pct"] = *r.ai_talk_time_pct;
  if (r.resolution_time_seconds) j["resolution_time_seconds"] = *r.resolution_time_seconds;
  if (r.deflected) j["deflected"] = *r.deflected;
  return j;
}

namespace {

template <typename T>
std::optional<T> opt_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

InteractionRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  try {
    InteractionRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.tenant_id = j.at("tenant_id").get<std::string>();
    r.target_id = j.at("target_id").get<std::string>();
    const std::string ts = j.at("occurred_at").get<std::string>();
    auto parsed = dates::parse_timestamp(ts);
    if (!parsed) throw ParseError("record " + r.record_id + ": occurred_at is not RFC 3339 with offset: " + ts);
    r.occurred_at = *parsed;
    const std::string kind = j.at("kind").get<std::string>();
    auto k = parse_kind(kind);
    if (!k) throw ParseError("record " + r.record_id + ": unknown kind " + kind);
    r.kind = *k;
    const std::string dir = j.at("direction").get<std::string>();
    auto d = parse_direction(dir);
    if (!d) throw ParseError("record " + r.record_id + ": unknown direction " + dir);
    r.direction = *d;
    r.duration_seconds = j.at("duration_seconds").get<double>();
    r.handled = j.at("handled").get<bool>();
    r.disposition = opt_field<std::string>(j, "disposition");
    r.channel = opt_field<std::string>(j, "channel");
    r.csat_score = opt_field<double>(j, "csat_score");
    r.ai_talk_time_pct = opt_field<double>(j, "ai_talk_time_pct");
    r.resolution_time_seconds = opt_field<double>(j, "resolution_time_seconds");
    r.deflected = opt_field<bool>(j, "deflected");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what());
  }
}

// ---- field access and computed metrics ----

const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> kColumns = {
      "record_id", "target_id",  "target_name", "occurred_at",          "kind",          "direction", "duration",
      "handled",   "disposition", "channel",    "csat_score", "percent_ai_talk_time", "resolution_time", "deflected"};
  return kColumns;
}

Cell field_value(const InteractionRecord& r, std::string_view field, const OrgIndex& org) {
  auto opt_num = [](const std::optional<double>& v) -> Cell {
    if (v) return *v;
    return std::monostate{};
  };
  auto opt_str = [](const std::optional<std::string>& v) -> Cell {
    if (v) return *v;
    return std::monostate{};
  };
  if (field == "record_id") return r.record_id;
  if (field == "target_id") return r.target_id;
  if (field == "target_name") {
    const OrgNode* n = org.find(r.target_id);
    if (n) return n->name;
    return std::monostate{};
  }
  if (field == "occurred_at") return dates::format_timestamp(r.occurred_at);
  if (field == "kind") return std::string(kind_name(r.kind));
  if (field == "direction") return std::string(direction_name(r.direction));
  if (field == "duration") return r.duration_seconds;
  if (field == "handled") return r.handled ? 1.0 : 0.0;
  if (field == "disposition") return opt_str(r.disposition);
  if (field == "channel") return opt_str(r.channel);
  if (field == "csat_score") return opt_num(r.csat_score);
  if (field == "percent_ai_talk_time") return opt_num(r.ai_talk_time_pct);
  if (field == "resolution_time") return opt_num(r.resolution_time_seconds);
  if (field == "deflected") {
    if (r.deflected) return *r.deflected ? 1.0 : 0.0;
    return std::monostate{};
  }
  return std::monostate{};
}

bool matches(const InteractionRecord& r, const Condition& c, const OrgIndex& org) {
  const Cell v = field_value(r, c.field, org);
  if (!c.expected) return !is_null(v);
  return v == *c.expected;
}

std::vector<std::string> MetricDef::referenced_columns() const {
  std::set<std::string> cols;
  for (const Condition& c : where) cols.insert(c.field);
  for (const Condition& c : numerator) cols.insert(c.field);
  if (!value_field.empty()) cols.insert(value_field);
  return {cols.begin(), cols.end()};
}

const std::vector<MetricDef>& metric_definitions() {
  using Op = MetricDef::Op;
  auto is = [](std::string field, std::string v) { return Condition{std::move(field), Cell{std::move(v)}}; };
  auto flag = [](std::string field) { return Condition{std::move(field), Cell{1.0}}; };
  static const std::vector<MetricDef> kDefs = {
      {"all_calls", Op::count, {is("kind", "call")}, "", {}},
      {"handled_calls", Op::count, {is("kind", "call"), flag("handled")}, "", {}},
      {"all_voicemails", Op::count, {is("kind", "voicemail")}, "", {}},
      {"inbound_texts", Op::count, {is("kind", "text"), is("direction", "inbound")}, "", {}},
      {"internal_meetings", Op::count, {is("kind", "meeting"), is("direction", "internal")}, "", {}},
      {"survey_count", Op::count, {Condition{"csat_score", std::nullopt}}, "", {}},
      {"deflection_rate", Op::ratio, {is("kind", "digital_session")}, "", {flag("deflected")}},
      {"average_csat_score", Op::mean, {}, "csat_score", {}},
      {"average_resolution_time", Op::mean, {is("kind", "digital_session")}, "resolution_time", {}},
      {"avg_handle_time", Op::mean, {is("kind", "call"), flag("handled")}, "duration", {}},
  };
  return kDefs;
}

const MetricDef* find_metric(std::string_view name) {
  for (const MetricDef& d : metric_definitions()) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

Catalog default_catalog() {
  using VT = ValueType;
  const std::set<AggFn> numeric = {AggFn::avg, AggFn::sum, AggFn::min, AggFn::max, AggFn::count};
  const std::set<AggFn> counted = {AggFn::count};
  auto col = [](std::string name, VT t, std::set<AggFn> aggs, bool maskable, std::string desc) {
    return FieldDef{std::move(name), FieldKind::column, t, std::move(aggs), maskable, std::move(desc)};
  };
  auto computed = [](std::string name, VT t, std::string desc, bool maskable = false) {
    return FieldDef{std::move(name), FieldKind::computed, t, {}, maskable, std::move(desc)};
  };
  return Catalog({
      col("record_id", VT::string, counted, false, "Unique interaction id"),
      col("target_id", VT::string, counted, false, "Org node that handled the interaction"),
      col("target_name", VT::string, counted, true, "Display name of the handling org node"),
      col("occurred_at", VT::timestamp, counted, false, "UTC instant the interaction started"),
      col("kind", VT::string, counted, false, "call, text, voicemail, meeting or digital_session"),
      col("direction", VT::string, counted, false, "inbound, outbound or internal"),
      col("duration", VT::duration_seconds, numeric, false, "Interaction length in seconds"),
      col("handled", VT::number, {AggFn::avg, AggFn::sum, AggFn::count}, false, "1 when an agent handled it"),
      col("disposition", VT::string, counted, false, "Call outcome label, e.g. Sale Closed"),
      col("channel", VT::string, counted, false, "Digital or text channel"),
      col("csat_score", VT::number, {AggFn::avg, AggFn::min, AggFn::max, AggFn::count}, true,
          "Post-interaction survey score 1-5"),
      col("percent_ai_talk_time", VT::percentage, {AggFn::avg, AggFn::min, AggFn::max, AggFn::count}, false,
          "Share of meeting talk time spoken by the AI assistant"),
      col("resolution_time", VT::duration_seconds, numeric, false, "Seconds until a digital session was resolved"),
      col("deflected", VT::number, {AggFn::avg, AggFn::sum, AggFn::count}, false,
          "1 when a digital session was resolved without an agent"),
      computed("all_calls", VT::number, "Number of calls"),
      computed("handled_calls", VT::number, "Number of calls handled by an agent"),
      computed("all_voicemails", VT::number, "Number of voicemails"),
      computed("inbound_texts", VT::number, "Number of inbound text messages"),
      computed("internal_meetings", VT::number, "Number of internal meetings"),
      computed("survey_count", VT::number, "Number of completed satisfaction surveys"),
      computed("deflection_rate", VT::number, "Deflected digital sessions divided by all digital sessions"),
      computed("average_csat_score", VT::number, "Mean survey score over answered surveys", true),
      computed("average_resolution_time", VT::duration_seconds, "Mean resolution time of digital sessions"),
      computed("avg_handle_time", VT::duration_seconds, "Mean duration of handled calls"),
  });
}

// ---- bundle I/O ----

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json parse_json_file(const std::filesystem::path& p) {
  const std::string text = read_file(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.filename().string() + ": " + e.what(), e.byte);
  }
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
}

}  // namespace

void check_integrity(const Dataset& ds) {
  const auto& known = record_columns();
  for (const FieldDef& f : ds.catalog.fields()) {
    if (f.kind == FieldKind::column) {
      if (std::find(known.begin(), known.end(), f.name) == known.end()) {
        throw IntegrityError("catalog column '" + f.name + "' is not a record field");
      }
      continue;
    }
    const MetricDef* def = find_metric(f.name);
    if (!def) throw IntegrityError("computed field '" + f.name + "' has no definition");
    for (const std::string& c : def->referenced_columns()) {
      const FieldDef* ref = ds.catalog.find(c);
      if (!ref || ref->kind != FieldKind::column) {
        throw IntegrityError("computed field '" + f.name + "' references unknown field '" + c + "'");
      }
    }
  }
  std::set<std::string> ids;
  for (const InteractionRecord& r : ds.records) {
    if (!ids.insert(r.record_id).second) throw IntegrityError("duplicate record_id " + r.record_id);
    if (r.tenant_id != ds.tenant_id) throw IntegrityError("record " + r.record_id + " belongs to another tenant");
    if (!ds.org.find(r.target_id)) {
      throw IntegrityError("record " + r.record_id + " references unknown target_id " + r.target_id);
    }
    if (!ds.org.is_leaf(r.target_id)) {
      throw IntegrityError("record " + r.record_id + " is attached to non-leaf target " + r.target_id);
    }
    if (r.duration_seconds < 0) throw IntegrityError("record " + r.record_id + " has negative duration");
    if (r.csat_score && (*r.csat_score < 1 || *r.csat_score > 5)) {
      throw IntegrityError("record " + r.record_id + " has csat_score outside [1,5]");
    }
    if (r.ai_talk_time_pct && (*r.ai_talk_time_pct < 0 || *r.ai_talk_time_pct > 100)) {
      throw IntegrityError("record " + r.record_id + " has ai_talk_time_pct outside [0,100]");
    }
    if (r.resolution_time_seconds && *r.resolution_time_seconds < 0) {
      throw IntegrityError("record " + r.record_id + " has negative resolution time");
    }
    const bool digital = r.kind == InteractionKind::digital_session;
    if (!digital && (r.deflected || r.resolution_time_seconds)) {
      throw IntegrityError("record " + r.record_id + " carries digital-session fields on a " +
                           std::string(kind_name(r.kind)));
    }
  }
}

Dataset load_dataset(const std::filesystem::path& bundle) {
  if (!std::filesystem::is_directory(bundle)) throw ParseError("dataset bundle is not a directory: " + bundle.string());
  Dataset ds;
  ds.catalog = Catalog::from_json(parse_json_file(bundle / "catalog.json"));
  ds.org = OrgIndex::from_json(parse_json_file(bundle / "org.json"));
  ds.tenant_id = ds.org.tenant_id();

  const std::string text = read_file(bundle / "records.jsonl");
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + offset, eol - offset);
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        ds.records.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("records.jsonl line " + std::to_string(line_no) + ": " + e.what(), offset + e.byte);
      } catch (const ParseError& e) {
        throw ParseError("records.jsonl line " + std::to_string(line_no) + ": " + e.what(), offset);
      }
    }
    offset = eol + 1;
  }
  if (ds.tenant_id.empty() && !ds.records.empty()) ds.tenant_id = ds.records.front().tenant_id;
  check_integrity(ds);
  return ds;
}

std::string serialize_records(const Dataset& ds) {
  std::string out;
  for (const InteractionRecord& r : ds.records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& bundle) {
  std::filesystem::create_directories(bundle);
  write_file(bundle / "catalog.json", ds.catalog.to_json().dump(2) + "\n");
  write_file(bundle / "org.json", ds.org.to_json().dump(2) + "\n");
  write_file(bundle / "records.jsonl", serialize_records(ds));
}

// ---- generator ----

OrgShape default_org_shape() {
  OrgShape shape;
  const std::string t = shape.tenant_id;
  auto node = [&t](std::string id, std::string name, NodeKind kind, std::optional<std::string> parent,
                   std::vector<std::string> aliases = {}) {
    return OrgNode{std::move(id), t, std::move(name), kind, std::move(parent), std::move(aliases)};
  };
  shape.nodes = {
      node("o-primary", "Primary Office", NodeKind::office, std::nullopt, {"HQ", "Headquarters"}),
      node("d-services", "Services", NodeKind::department, "o-primary"),
      node("c-support", "Support", NodeKind::call_center, "o-primary", {"main Support call center"}),
      node("t-care", "Customer Care", NodeKind::team, "d-services"),
      node("t-billing", "Billing", NodeKind::team, "d-services"),
      node("g-sea-support", "Seattle Support", NodeKind::agent_group, "c-support", {"Seattle support team"}),
      node("g-pdx-support", "Portland Support", NodeKind::agent_group, "c-support", {"Portland support team"}),
      node("o-east", "East Office", NodeKind::office, std::nullopt),
      node("d-sales", "Sales", NodeKind::department, "o-east"),
      node("g-sales-in", "Inbound Sales", NodeKind::agent_group, "d-sales"),
      node("g-sales-out", "Outbound Sales", NodeKind::agent_group, "d-sales"),
      node("t-east-support", "East Support", NodeKind::team, "o-east"),
  };
  return shape;
}

std::array<std::size_t, 5> kind_quota(std::size_t n) {
  // per-mille shares in kAllKinds order: call, text, voicemail, meeting, digital_session
  constexpr std::array<std::size_t, 5> kShare = {450, 200, 100, 100, 150};
  std::array<std::size_t, 5> out{};
  std::array<std::size_t, 5> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    out[i] = n * kShare[i] / 1000;
    remainder[i] = n * kShare[i] % 1000;
    assigned += out[i];
  }
  std::array<std::size_t, 5> order = {0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++out[order[i % 5]];
  return out;
}

namespace {

// Raw mt19937_64 output is fully specified; the std distributions are not.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(unit() * static_cast<double>(n))); }
  double between(double lo, double hi) { return lo + (hi - lo) * unit(); }
  bool chance(double p) { return unit() < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

 private:
  std::mt19937_64 rng_;
};

double whole(double v) { return static_cast<double>(static_cast<long long>(v)); }

}  // namespace

Dataset generate_dataset(std::uint64_t seed, std::size_t n_records, const OrgShape& shape) {
  Dataset ds;
  ds.tenant_id = shape.tenant_id;
  ds.catalog = default_catalog();
  ds.org = OrgIndex(shape.nodes);
  if (shape.days < 1) throw SpecError("org shape needs a window of at least one day");

  std::vector<std::string> leaves;
  for (const OrgNode& n : ds.org.nodes()) {
    if (ds.org.is_leaf(n.id)) leaves.push_back(n.id);
  }
  if (leaves.empty() && n_records > 0) throw SpecError("org shape has no leaf targets");

  Draw draw(seed);
  std::vector<InteractionKind> kinds;
  const auto quota = kind_quota(n_records);
  for (std::size_t k = 0; k < quota.size(); ++k) kinds.insert(kinds.end(), quota[k], kAllKinds[k]);
  for (std::size_t i = kinds.size(); i > 1; --i) std::swap(kinds[i - 1], kinds[draw.below(i)]);

  const std::vector<std::string> dispositions = {"Sale Closed", "Follow Up", "Resolved", "Escalated"};
  const std::vector<std::string> digital_channels = {"chat", "email", "web", "app"};
  const auto window_start = dates::Instant{std::chrono::sys_days{shape.start}.time_since_epoch()};
  const auto window_seconds = static_cast<double>(shape.days) * 86400.0;

  for (InteractionKind kind : kinds) {
    InteractionRecord r;
    r.tenant_id = shape.tenant_id;
    r.kind = kind;
    r.target_id = draw.pick(leaves);
    r.occurred_at = window_start + std::chrono::seconds{static_cast<long long>(draw.unit() * window_seconds)};
    switch (kind) {
      case InteractionKind::call:
        r.direction = draw.chance(0.7) ? Direction::inbound : Direction::outbound;
        r.duration_seconds = whole(draw.between(60, 900));
        r.handled = draw.chance(0.85);
        if (r.handled) {
          r.disposition = draw.pick(dispositions);
          if (draw.chance(0.3)) r.csat_score = whole(draw.between(1, 6));
        }
        break;
      case InteractionKind::text:
        r.direction = draw.chance(0.6) ? Direction::inbound : Direction::outbound;
        r.channel = "sms";
        break;
      case InteractionKind::voicemail:
        r.direction = Direction::inbound;
        r.duration_seconds = whole(draw.between(10, 120));
        break;
      case InteractionKind::meeting:
        r.direction = draw.chance(0.6) ? Direction::internal : Direction::outbound;
        r.duration_seconds = whole(draw.between(900, 3600));
        r.ai_talk_time_pct = whole(draw.between(0, 600)) / 10.0;
        break;
      case InteractionKind::digital_session:
        r.direction = Direction::inbound;
        r.duration_seconds = whole(draw.between(60, 1200));
        r.channel = draw.pick(digital_channels);
        r.deflected = draw.chance(0.35);
        r.handled = !*r.deflected;
        r.resolution_time_seconds = whole(draw.between(120, 7200));
        if (draw.chance(0.25)) r.csat_score = whole(draw.between(1, 6));
        break;
    }
    ds.records.push_back(std::move(r));
  }
  std::stable_sort(ds.records.begin(), ds.records.end(),
                   [](const InteractionRecord& a, const InteractionRecord& b) { return a.occurred_at < b.occurred_at; });
  char buf[32];
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    std::snprintf(buf, sizeof buf, "r-%06zu", i + 1);
    ds.records[i].record_id = buf;
  }
  check_integrity(ds);
  return ds;
}

}  // namespace govq
