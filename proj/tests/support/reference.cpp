#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace govq::testing {

namespace {

const std::string kNull = "<null>";

// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

struct Ymd {
  long y;
  unsigned m;
  unsigned d;
};

Ymd civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

// 0 = Monday.
unsigned weekday_mon0(long days) { return static_cast<unsigned>(((days % 7) + 7 + 3) % 7); }

std::string pad(long v, int width) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%0*ld", width, v);
  return buf;
}

std::string iso_week_label(long days) {
  const long thursday = days - weekday_mon0(days) + 3;
  const Ymd t = civil_from_days(thursday);
  const long jan1 = days_from_civil(t.y, 1, 1);
  const long week = (thursday - jan1) / 7 + 1;
  return pad(t.y, 4) + "-W" + pad(week, 2);
}

long epoch_seconds(dates::Instant t) { return static_cast<long>(t.time_since_epoch().count()); }

long floor_div(long a, long b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

std::string time_label(long secs, dates::Grain g) {
  const long day = floor_div(secs, 86400);
  const Ymd c = civil_from_days(day);
  const std::string ymd = pad(c.y, 4) + "-" + pad(c.m, 2) + "-" + pad(c.d, 2);
  switch (g) {
    case dates::Grain::hour:
      return ymd + "T" + pad((secs - day * 86400) / 3600, 2);
    case dates::Grain::day:
      return ymd;
    case dates::Grain::week:
      return iso_week_label(day);
    case dates::Grain::month:
      return pad(c.y, 4) + "-" + pad(c.m, 2);
  }
  return ymd;
}

long civil_days(const dates::CivilDate& d) {
  return days_from_civil(static_cast<int>(d.year()), static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
}

// ---- field access ----

struct Val {
  bool present = false;
  bool numeric = false;
  double num = 0;
  std::string str;
};

Val s(const std::string& v) { return {true, false, 0, v}; }
Val n(double v) { return {true, true, v, {}}; }

Val field(const InteractionRecord& r, const std::string& f, const Dataset& ds) {
  static const char* kKinds[] = {"call", "text", "voicemail", "meeting", "digital_session"};
  static const char* kDirs[] = {"inbound", "outbound", "internal"};
  if (f == "record_id") return s(r.record_id);
  if (f == "target_id") return s(r.target_id);
  if (f == "target_name") {
    for (const OrgNode& node : ds.org.nodes()) {
      if (node.id == r.target_id) return s(node.name);
    }
    return {};
  }
  if (f == "kind") return s(kKinds[static_cast<int>(r.kind)]);
  if (f == "direction") return s(kDirs[static_cast<int>(r.direction)]);
  if (f == "duration") return n(r.duration_seconds);
  if (f == "handled") return n(r.handled ? 1 : 0);
  if (f == "disposition") return r.disposition ? s(*r.disposition) : Val{};
  if (f == "channel") return r.channel ? s(*r.channel) : Val{};
  if (f == "csat_score") return r.csat_score ? n(*r.csat_score) : Val{};
  if (f == "percent_ai_talk_time") return r.ai_talk_time_pct ? n(*r.ai_talk_time_pct) : Val{};
  if (f == "resolution_time") return r.resolution_time_seconds ? n(*r.resolution_time_seconds) : Val{};
  if (f == "deflected") return r.deflected ? n(*r.deflected ? 1 : 0) : Val{};
  throw std::logic_error("reference: no field " + f);
}

bool same(const Val& v, const Cell& c) {
  if (!v.present) return false;
  if (const double* d = as_number(c)) return v.numeric && v.num == *d;
  if (const std::string* t = as_string(c)) return !v.numeric && v.str == *t;
  return false;
}

bool passes(const InteractionRecord& r, const FilterClause& f, const Dataset& ds) {
  const Val v = field(r, f.field, ds);
  if (!v.present) return false;
  switch (f.op) {
    case FilterOp::eq:
    case FilterOp::in:
      return std::any_of(f.values.begin(), f.values.end(), [&](const Cell& c) { return same(v, c); });
    case FilterOp::gte:
      if (const double* d = as_number(f.values.at(0))) return v.numeric && v.num >= *d;
      if (const std::string* t = as_string(f.values.at(0))) return !v.numeric && v.str >= *t;
      return false;
    case FilterOp::lt:
      if (const double* d = as_number(f.values.at(0))) return v.numeric && v.num < *d;
      if (const std::string* t = as_string(f.values.at(0))) return !v.numeric && v.str < *t;
      return false;
  }
  return false;
}

bool under(const std::string& node, const std::string& ancestor, const Dataset& ds) {
  std::optional<std::string> cur = node;
  while (cur) {
    if (*cur == ancestor) return true;
    const OrgNode* n = ds.org.find(*cur);
    cur = n ? n->parent_id : std::nullopt;
  }
  return false;
}

// ---- aggregation ----

struct Acc {
  double count = 0;
  double hits = 0;
  double sum = 0;
  std::optional<double> lo;
  std::optional<double> hi;
};

// Returns the value the record contributes for one select, or nothing.
void feed(Acc& a, const SelectExpr& e, const InteractionRecord& r, const Dataset& ds) {
  const bool call = r.kind == InteractionKind::call;
  if (const auto* c = std::get_if<ComputedRef>(&e.source)) {
    const std::string& m = c->name;
    if (m == "all_calls") {
      a.count += call;
    } else if (m == "handled_calls") {
      a.count += call && r.handled;
    } else if (m == "all_voicemails") {
      a.count += r.kind == InteractionKind::voicemail;
    } else if (m == "inbound_texts") {
      a.count += r.kind == InteractionKind::text && r.direction == Direction::inbound;
    } else if (m == "internal_meetings") {
      a.count += r.kind == InteractionKind::meeting && r.direction == Direction::internal;
    } else if (m == "survey_count") {
      a.count += r.csat_score.has_value();
    } else if (m == "deflection_rate") {
      if (r.kind == InteractionKind::digital_session) {
        a.count += 1;
        a.hits += r.deflected.value_or(false) ? 1 : 0;
      }
    } else if (m == "average_csat_score") {
      if (r.csat_score) {
        a.count += 1;
        a.sum += *r.csat_score;
      }
    } else if (m == "average_resolution_time") {
      if (r.kind == InteractionKind::digital_session && r.resolution_time_seconds) {
        a.count += 1;
        a.sum += *r.resolution_time_seconds;
      }
    } else if (m == "avg_handle_time") {
      if (call && r.handled) {
        a.count += 1;
        a.sum += r.duration_seconds;
      }
    } else {
      throw std::logic_error("reference: no metric " + m);
    }
    return;
  }
  const auto& p = std::get<ParamAgg>(e.source);
  if (p.field == "*") {
    a.count += 1;
    return;
  }
  const Val v = field(r, p.field, ds);
  if (!v.present) return;
  a.count += 1;
  if (v.numeric) {
    a.sum += v.num;
    a.lo = a.lo ? std::min(*a.lo, v.num) : v.num;
    a.hi = a.hi ? std::max(*a.hi, v.num) : v.num;
  }
}

bool is_mean(const SelectExpr& e) {
  if (const auto* c = std::get_if<ComputedRef>(&e.source)) {
    return c->name == "average_csat_score" || c->name == "average_resolution_time" || c->name == "avg_handle_time";
  }
  return false;
}

std::optional<double> result_of(const Acc& a, const SelectExpr& e) {
  if (const auto* c = std::get_if<ComputedRef>(&e.source)) {
    if (c->name == "deflection_rate") return a.count > 0 ? std::optional<double>(a.hits / a.count) : std::nullopt;
    if (is_mean(e)) return a.count > 0 ? std::optional<double>(a.sum / a.count) : std::nullopt;
    return a.count;
  }
  const auto& p = std::get<ParamAgg>(e.source);
  switch (p.fn) {
    case AggFn::count:
      return a.count;
    case AggFn::sum:
      return a.sum;
    case AggFn::avg:
      return a.count > 0 ? std::optional<double>(a.sum / a.count) : std::nullopt;
    case AggFn::min:
      return a.lo;
    case AggFn::max:
      return a.hi;
  }
  return std::nullopt;
}

bool exact_kind(const SelectExpr& e) {
  if (const auto* c = std::get_if<ComputedRef>(&e.source)) return c->name != "deflection_rate" && !is_mean(e);
  const auto& p = std::get<ParamAgg>(e.source);
  return p.fn != AggFn::avg;
}

std::vector<const SelectExpr*> aggregates(const ValidatedRequest& req) {
  std::vector<const SelectExpr*> out;
  for (const SelectExpr& e : req.select) {
    if (!std::holds_alternative<ColumnRef>(e.source)) out.push_back(&e);
  }
  return out;
}

}  // namespace

RefResult reference_run(const ValidatedRequest& req, const Principal& principal, const Dataset& ds,
                        std::size_t record_limit) {
  if (req.date_range.tz != "UTC") throw std::logic_error("reference handles UTC only");
  const long lo = civil_days(req.date_range.start) * 86400;
  const long hi = civil_days(req.date_range.end) * 86400;

  std::vector<const InteractionRecord*> rows;
  for (const InteractionRecord& r : ds.records) {
    const long t = epoch_seconds(r.occurred_at);
    if (t < lo || t >= hi) continue;
    if (!principal.permits(r.target_id)) continue;
    if (!req.targets.empty() &&
        std::none_of(req.targets.begin(), req.targets.end(), [&](const std::string& x) { return under(r.target_id, x, ds); })) {
      continue;
    }
    if (!std::all_of(req.filters.begin(), req.filters.end(), [&](const FilterClause& f) { return passes(r, f, ds); })) {
      continue;
    }
    rows.push_back(&r);
  }

  RefResult out;
  const auto aggs = aggregates(req);

  if (req.endpoint == Endpoint::records) {
    std::sort(rows.begin(), rows.end(), [](const InteractionRecord* a, const InteractionRecord* b) {
      if (a->occurred_at != b->occurred_at) return a->occurred_at > b->occurred_at;
      return a->record_id > b->record_id;
    });
    for (const InteractionRecord* r : rows) out.record_ids.push_back(r->record_id);
    if (out.record_ids.size() > record_limit) {
      out.record_ids.resize(record_limit);
      out.truncated = true;
    }
    return out;
  }

  std::map<std::vector<std::string>, std::vector<Acc>> accs;
  if (req.endpoint == Endpoint::leaderboard) {
    std::vector<std::string> entrants = req.targets;
    if (entrants.empty()) {
      for (const std::string& id : principal.permitted_target_ids) {
        if (ds.org.children(id).empty()) entrants.push_back(id);
      }
    }
    std::sort(entrants.begin(), entrants.end());
    for (const std::string& t : entrants) accs[{t}].resize(aggs.size());
    for (const InteractionRecord* r : rows) {
      for (const std::string& t : entrants) {
        if (!under(r->target_id, t, ds)) continue;
        for (std::size_t i = 0; i < aggs.size(); ++i) feed(accs[{t}][i], *aggs[i], *r, ds);
        break;
      }
    }
  } else {
    for (const InteractionRecord* r : rows) {
      std::vector<std::string> key;
      for (const GroupByKey& k : req.group_by) {
        if (const auto* g = std::get_if<TimeGrain>(&k)) {
          key.push_back(time_label(epoch_seconds(r->occurred_at), g->grain));
        } else {
          const Val v = field(*r, std::get<Dimension>(k).field, ds);
          key.push_back(v.present ? v.str : kNull);
        }
      }
      auto& a = accs[key];
      a.resize(aggs.size());
      for (std::size_t i = 0; i < aggs.size(); ++i) feed(a[i], *aggs[i], *r, ds);
    }
    if (req.endpoint == Endpoint::aggregate_metrics && req.group_by.empty() && accs.empty()) accs[{}].resize(aggs.size());
    if (req.endpoint == Endpoint::timeseries) {
      std::size_t gpos = 0;
      dates::Grain grain = dates::Grain::day;
      for (std::size_t i = 0; i < req.group_by.size(); ++i) {
        if (const auto* g = std::get_if<TimeGrain>(&req.group_by[i])) {
          gpos = i;
          grain = g->grain;
        }
      }
      std::set<std::vector<std::string>> rest;
      for (const auto& [key, _] : accs) {
        auto k = key;
        k.erase(k.begin() + static_cast<long>(gpos));
        rest.insert(k);
      }
      if (rest.empty() && req.group_by.size() == 1) rest.insert(std::vector<std::string>{});
      const long step = grain == dates::Grain::hour ? 3600 : 86400;
      for (long t = lo; t < hi; t += step) {
        const std::string label = time_label(t, grain);
        for (const auto& r : rest) {
          auto k = r;
          k.insert(k.begin() + static_cast<long>(gpos), label);
          accs[k].resize(aggs.size());
        }
      }
    }
  }
  for (const auto& [key, a] : accs) {
    std::vector<std::optional<double>> vals;
    for (std::size_t i = 0; i < aggs.size(); ++i) vals.push_back(result_of(a[i], *aggs[i]));
    out.groups[key] = vals;
  }
  return out;
}

RefResult reshape(const TabularResult& table, Endpoint endpoint) {
  RefResult out;
  out.truncated = table.truncated;
  if (endpoint == Endpoint::records) {
    auto idx = table.column_index("record_id");
    if (!idx) throw std::logic_error("records table lacks record_id");
    for (const auto& row : table.rows) out.record_ids.push_back(*as_string(row[*idx]));
    return out;
  }
  std::vector<std::size_t> keys;
  std::vector<std::size_t> values;
  for (std::size_t i = 0; i < table.schema.size(); ++i) {
    const std::string& src = table.schema[i].source;
    if (endpoint == Endpoint::leaderboard) {
      if (src == "key(target_id)") keys.push_back(i);
      else if (src != "key(target_name)") values.push_back(i);
    } else if (src.rfind("group(", 0) == 0) {
      keys.push_back(i);
    } else {
      values.push_back(i);
    }
  }
  for (const auto& row : table.rows) {
    std::vector<std::string> key;
    for (std::size_t k : keys) {
      const std::string* sv = as_string(row[k]);
      key.push_back(sv ? *sv : kNull);
    }
    std::vector<std::optional<double>> vals;
    for (std::size_t v : values) {
      const double* d = as_number(row[v]);
      vals.push_back(d ? std::optional<double>(*d) : std::nullopt);
    }
    if (out.groups.count(key)) throw std::logic_error("duplicate group key in executor output");
    out.groups[key] = vals;
  }
  return out;
}

RefMismatch compare_ref(const RefResult& ref, const RefResult& act, const ValidatedRequest& req, double rel_tol) {
  if (req.endpoint == Endpoint::records) {
    if (ref.record_ids != act.record_ids) return {false, "record ids differ"};
    if (ref.truncated != act.truncated) return {false, "truncation flag differs"};
    return {};
  }
  if (ref.groups.size() != act.groups.size()) {
    return {false, "group count " + std::to_string(act.groups.size()) + " vs reference " + std::to_string(ref.groups.size())};
  }
  const auto aggs = aggregates(req);
  for (const auto& [key, rv] : ref.groups) {
    auto it = act.groups.find(key);
    std::string label;
    for (const auto& k : key) label += k + "|";
    if (it == act.groups.end()) return {false, "missing group " + label};
    const auto& av = it->second;
    if (av.size() != rv.size()) return {false, "value count differs in " + label};
    for (std::size_t i = 0; i < rv.size(); ++i) {
      if (rv[i].has_value() != av[i].has_value()) return {false, "null mismatch in " + label + " col " + std::to_string(i)};
      if (!rv[i]) continue;
      const double a = *av[i];
      const double b = *rv[i];
      const bool ok = exact_kind(*aggs[i]) ? a == b
                                           : std::fabs(a - b) <= rel_tol * std::max({std::fabs(a), std::fabs(b), 1e-300});
      if (!ok) {
        return {false, "value " + std::to_string(a) + " vs reference " + std::to_string(b) + " in " + label + " col " +
                           std::to_string(i)};
      }
    }
  }
  return {};
}

}  // namespace govq::testing
