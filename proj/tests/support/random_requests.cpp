#include "random_requests.hpp"

#include <algorithm>
#include <set>

namespace govq::testing {

namespace {

const std::vector<std::string> kComputed = {"all_calls",          "handled_calls",          "all_voicemails",
                                            "inbound_texts",      "internal_meetings",      "survey_count",
                                            "deflection_rate",    "average_csat_score",     "average_resolution_time",
                                            "avg_handle_time"};
const std::vector<std::string> kParam = {"count:*:n_rows",         "avg:duration:avg_duration",
                                         "sum:duration:total_duration", "min:duration:shortest",
                                         "max:duration:longest",    "avg:handled:handled_share",
                                         "sum:handled:handled_n",   "avg:csat_score:csat",
                                         "max:csat_score:best_csat", "count:disposition:with_disposition",
                                         "avg:percent_ai_talk_time:ai_pct", "sum:resolution_time:resolution_total",
                                         "avg:deflected:deflected_share"};
const std::vector<std::string> kDims = {"channel", "disposition", "direction", "kind", "target_name", "target_id"};
const std::vector<std::string> kGrains = {"hour", "day", "week", "month"};
const std::vector<std::string> kRecordCols = {"col:occurred_at", "col:target_id", "col:kind",  "col:direction",
                                              "col:duration",    "col:channel",   "col:csat_score"};

std::string date_str(int y, int m, int d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
  return buf;
}

}  // namespace

void RequestGen::random_dates(AnalyticsRequest& r) {
  // Dataset spans 2025-01-01 .. 2025-06-19; pick spans inside and around it.
  const std::chrono::sys_days base{std::chrono::year{2024} / 12 / 20};
  const int start = static_cast<int>(pick(200));
  const int len = 1 + static_cast<int>(pick(coin(0.3) ? 3 : 60));
  const std::chrono::year_month_day s{base + std::chrono::days{start}};
  const std::chrono::year_month_day e{base + std::chrono::days{start + len}};
  r.start_date = date_str(static_cast<int>(s.year()), static_cast<int>(static_cast<unsigned>(s.month())),
                          static_cast<int>(static_cast<unsigned>(s.day())));
  r.end_date = date_str(static_cast<int>(e.year()), static_cast<int>(static_cast<unsigned>(e.month())),
                        static_cast<int>(static_cast<unsigned>(e.day())));
}

std::vector<std::string> RequestGen::targets(std::size_t max_n) {
  std::vector<std::string> out;
  const std::size_t n = pick(max_n + 1);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ds_.org.nodes()[pick(ds_.org.nodes().size())].id);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<FilterClause> RequestGen::filters() {
  std::vector<FilterClause> out;
  const std::size_t n = pick(3);
  for (std::size_t i = 0; i < n; ++i) {
    switch (pick(5)) {
      case 0:
        out.push_back({"kind", FilterOp::eq, {Cell{one_of<std::string>({"call", "text", "voicemail", "meeting", "digital_session"})}}});
        break;
      case 1:
        out.push_back({"direction", FilterOp::in, {Cell{std::string("inbound")}, Cell{one_of<std::string>({"outbound", "internal"})}}});
        break;
      case 2:
        out.push_back({"duration", coin() ? FilterOp::gte : FilterOp::lt, {Cell{static_cast<double>(60 * (1 + pick(20)))}}});
        break;
      case 3:
        out.push_back({"channel", FilterOp::in, {Cell{one_of<std::string>({"chat", "email", "web", "app", "sms"})}}});
        break;
      default:
        out.push_back({"disposition", FilterOp::eq, {Cell{one_of<std::string>({"Sale Closed", "Follow Up", "Resolved", "Escalated"})}}});
        break;
    }
  }
  return out;
}

AnalyticsRequest RequestGen::valid(Endpoint endpoint) {
  AnalyticsRequest r;
  r.endpoint = std::string(endpoint_name(endpoint));
  random_dates(r);
  r.targets = targets(2);
  r.filters = filters();
  if (endpoint == Endpoint::records) {
    r.select.push_back("col:record_id");
    std::vector<std::string> cols = kRecordCols;
    std::shuffle(cols.begin(), cols.end(), rng_);
    cols.resize(pick(cols.size()));
    r.select.insert(r.select.end(), cols.begin(), cols.end());
    return r;
  }
  std::set<std::string> used;
  const std::size_t n_sel = 1 + pick(3);
  while (used.size() < n_sel) {
    used.insert(coin() ? one_of(kComputed) : one_of(kParam));
  }
  r.select.assign(used.begin(), used.end());
  std::shuffle(r.select.begin(), r.select.end(), rng_);
  if (endpoint == Endpoint::timeseries) {
    // Keep hourly series short.
    std::string grain = one_of(kGrains);
    if (grain == "hour") {
      auto d = dates::parse_date(r.start_date);
      r.end_date = dates::format_date(std::chrono::sys_days{*d} + std::chrono::days{1 + static_cast<int>(pick(2))});
    }
    r.group_by.push_back(grain);
    if (coin(0.4)) r.group_by.insert(r.group_by.begin() + static_cast<long>(pick(2)), one_of(kDims));
  } else if (endpoint == Endpoint::aggregate_metrics) {
    std::set<std::string> dims;
    const std::size_t nd = pick(3);
    while (dims.size() < nd) dims.insert(one_of(kDims));
    r.group_by.assign(dims.begin(), dims.end());
  }
  if (endpoint == Endpoint::leaderboard || coin(0.3)) {
    // Order on a selected alias.
    const std::string pickd = r.select[pick(r.select.size())];
    const auto colon = pickd.rfind(':');
    r.order_by.push_back({colon == std::string::npos ? pickd : pickd.substr(colon + 1), coin() ? SortDir::asc : SortDir::desc});
  }
  return r;
}

AnalyticsRequest RequestGen::arbitrary() {
  static const std::vector<std::string> kEndpoints = {"aggregate_metrics", "leaderboard", "timeseries", "records",
                                                      "metrics", "", "Timeseries", "records "};
  static const std::vector<std::string> kJunkSelect = {"col:",          "avg:duration",  "avg:duration:",  "foo",
                                                       "col:nope",      "count:*:",      "sum:*:x",        "avg:kind:x",
                                                       "duration",      "ALL_CALLS",     "all_calls as 9", "count:*:a b",
                                                       " all_calls ",   "avg:duration:avg_duration as y", "::", "col:duration as d"};
  static const std::vector<std::string> kDates = {"2025-01-01", "2025-06-19", "2025-02-30", "2025-13-01", "",
                                                  "yesterday",  "2025-1-1",   "2024-12-31", "2025-03-15", "2026-01-01"};
  static const std::vector<std::string> kGroups = {"hour", "day", "week", "month", "channel", "kind", "duration",
                                                   "col:channel", "nope", "", "quarter", "target_name"};
  if (coin(0.5)) {
    AnalyticsRequest r = valid(static_cast<Endpoint>(pick(4)));
    // Perturb one part, or leave it intact.
    switch (pick(10)) {
      case 0:
        std::swap(r.start_date, r.end_date);
        break;
      case 1:
        r.select.push_back(one_of(kJunkSelect));
        break;
      case 2:
        r.order_by.push_back({"no_such_alias", SortDir::desc});
        break;
      case 3:
        r.group_by.push_back(one_of(kGroups));
        break;
      case 4:
        r.filters.push_back({one_of(kDims), one_of<FilterOp>({FilterOp::eq, FilterOp::in, FilterOp::gte, FilterOp::lt}), {}});
        break;
      case 5:
        r.timezone = one_of<std::string>({"UTC", "Mars/Olympus", "America/New_York", ""});
        break;
      case 6:
        r.select.clear();
        break;
      default:
        break;
    }
    return r;
  }
  AnalyticsRequest r;
  r.endpoint = one_of(kEndpoints);
  const std::size_t ns = pick(4);
  for (std::size_t i = 0; i < ns; ++i) {
    r.select.push_back(coin() ? one_of(kJunkSelect) : (coin() ? one_of(kComputed) : one_of(kParam)));
  }
  r.start_date = one_of(kDates);
  r.end_date = one_of(kDates);
  r.timezone = one_of<std::string>({"UTC", "Europe/Berlin", "Nowhere/City"});
  r.targets = targets(2);
  if (coin(0.2)) r.targets.push_back("no-such-target");
  const std::size_t ng = pick(3);
  for (std::size_t i = 0; i < ng; ++i) r.group_by.push_back(one_of(kGroups));
  if (coin(0.3)) r.filters = filters();
  if (coin(0.2)) r.filters.push_back({"duration", FilterOp::eq, {Cell{std::string("long")}}});
  if (coin(0.3)) r.order_by.push_back({one_of<std::string>({"all_calls", "x", "avg_duration", ""}), SortDir::asc});
  return r;
}

Principal RequestGen::principal(const std::string& user_id) {
  std::vector<std::string> grants = targets(3);
  std::set<std::string> caps;
  if (coin()) caps.insert("unmasked");
  return make_principal(user_id, ds_.org, grants, caps);
}

}  // namespace govq::testing
