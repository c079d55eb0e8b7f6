#include "govq/date_resolver.hpp"

#include <cstdio>

#include "absl/time/civil_time.h"
#include "absl/time/time.h"
#include "govq/errors.hpp"

namespace govq::dates {
namespace {

using std::chrono::days;
using std::chrono::sys_days;

absl::TimeZone load_zone(std::string_view tz) {
  absl::TimeZone zone;
  if (!absl::LoadTimeZone(std::string(tz), &zone)) {
    throw InvalidExpr("unknown timezone: " + std::string(tz));
  }
  return zone;
}

absl::Time to_absl(Instant ts) { return absl::FromUnixSeconds(ts.time_since_epoch().count()); }

Instant from_absl(absl::Time t) { return Instant{std::chrono::seconds{absl::ToUnixSeconds(t)}}; }

CivilDate from_civil(const absl::CivilDay& d) {
  return CivilDate{std::chrono::year{static_cast<int>(d.year())},
                   std::chrono::month{static_cast<unsigned>(d.month())},
                   std::chrono::day{static_cast<unsigned>(d.day())}};
}

CivilDate add_days(CivilDate d, int n) { return CivilDate{sys_days{d} + days{n}}; }

CivilDate month_start(std::chrono::year_month ym) { return CivilDate{ym / std::chrono::day{1}}; }

CivilDate week_start(CivilDate d) {
  const std::chrono::weekday wd{sys_days{d}};
  return add_days(d, -static_cast<int>(wd.iso_encoding() - 1));
}

std::chrono::year_month quarter_start(CivilDate d) {
  const unsigned m = static_cast<unsigned>(d.month());
  const unsigned first = ((m - 1) / 3) * 3 + 1;
  return d.year() / std::chrono::month{first};
}

int year_of(CivilDate d) { return static_cast<int>(d.year()); }

DateRange unit_range(CalendarUnit unit, CivilDate today, int offset, const std::string& tz) {
  switch (unit) {
    case CalendarUnit::week: {
      const CivilDate start = add_days(week_start(today), 7 * offset);
      return {start, add_days(start, 7), tz};
    }
    case CalendarUnit::month: {
      const auto ym = today.year() / today.month() + std::chrono::months{offset};
      return {month_start(ym), month_start(ym + std::chrono::months{1}), tz};
    }
    case CalendarUnit::quarter: {
      const auto ym = quarter_start(today) + std::chrono::months{3 * offset};
      return {month_start(ym), month_start(ym + std::chrono::months{3}), tz};
    }
  }
  throw InvalidExpr("unknown calendar unit");
}

std::string two(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v);
  return buf;
}

}  // namespace

bool valid_timezone(std::string_view tz) {
  absl::TimeZone zone;
  return !tz.empty() && absl::LoadTimeZone(std::string(tz), &zone);
}

CivilDate local_date(Instant ts, std::string_view tz) {
  return from_civil(absl::ToCivilDay(to_absl(ts), load_zone(tz)));
}

IsoWeek iso_week(CivilDate date) {
  const sys_days sd{date};
  const std::chrono::weekday wd{sd};
  const CivilDate thursday{sd - days{wd.iso_encoding() - 1} + days{3}};
  const sys_days jan1{thursday.year() / std::chrono::January / 1};
  const auto ordinal = (sys_days{thursday} - jan1).count();
  return {year_of(thursday), static_cast<int>(ordinal / 7 + 1)};
}

DateRange resolve(const DateExpr& expr, Instant now, std::string_view tz_view) {
  const std::string tz{tz_view};
  if (!valid_timezone(tz)) throw InvalidExpr("unknown timezone: " + tz);
  const CivilDate today = local_date(now, tz);

  return std::visit(
      [&](const auto& e) -> DateRange {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, SingleDay>) {
          if (!e.date.ok()) throw InvalidExpr("invalid calendar date");
          return {e.date, add_days(e.date, 1), tz};
        } else if constexpr (std::is_same_v<T, MonthOf>) {
          if (e.month < 1 || e.month > 12) throw InvalidExpr("month out of range: " + std::to_string(e.month));
          if (e.year < 1 || e.year > 9999) throw InvalidExpr("year out of range");
          const auto ym = std::chrono::year{e.year} / std::chrono::month{static_cast<unsigned>(e.month)};
          return {month_start(ym), month_start(ym + std::chrono::months{1}), tz};
        } else if constexpr (std::is_same_v<T, QuarterOf>) {
          if (e.quarter < 1 || e.quarter > 4) throw InvalidExpr("quarter out of range: " + std::to_string(e.quarter));
          if (e.year < 1 || e.year > 9999) throw InvalidExpr("year out of range");
          const auto ym = std::chrono::year{e.year} / std::chrono::month{static_cast<unsigned>(3 * e.quarter - 2)};
          return {month_start(ym), month_start(ym + std::chrono::months{3}), tz};
        } else if constexpr (std::is_same_v<T, RelativeDay>) {
          const CivilDate d = add_days(today, e.offset);
          return {d, add_days(d, 1), tz};
        } else if constexpr (std::is_same_v<T, RelativeCalendarUnit>) {
          return unit_range(e.unit, today, e.offset, tz);
        } else if constexpr (std::is_same_v<T, TrailingWindow>) {
          if (e.n < 1) throw InvalidExpr("trailing window needs n >= 1");
          const int span = e.unit == WindowUnit::weeks ? 7 * e.n : e.n;
          return {add_days(today, -span), today, tz};
        } else if constexpr (std::is_same_v<T, ThisUnit>) {
          DateRange r = unit_range(e.unit, today, 0, tz);
          r.end = add_days(today, 1);
          return r;
        } else {
          if (!e.start.ok() || !e.end.ok()) throw InvalidExpr("invalid calendar date");
          if (sys_days{e.end} <= sys_days{e.start}) throw InvalidExpr("End date must be after start date");
          return {e.start, e.end, tz};
        }
      },
      expr);
}

Instant range_start(const DateRange& range) {
  const absl::CivilSecond cs(year_of(range.start), static_cast<unsigned>(range.start.month()),
                             static_cast<unsigned>(range.start.day()));
  return from_absl(absl::FromCivil(cs, load_zone(range.tz)));
}

Instant range_end(const DateRange& range) {
  const absl::CivilSecond cs(year_of(range.end), static_cast<unsigned>(range.end.month()),
                             static_cast<unsigned>(range.end.day()));
  return from_absl(absl::FromCivil(cs, load_zone(range.tz)));
}

bool contains(const DateRange& range, Instant ts) { return range_start(range) <= ts && ts < range_end(range); }

std::string bucket(Instant ts, Grain grain, std::string_view tz) {
  const absl::CivilSecond cs = absl::ToCivilSecond(to_absl(ts), load_zone(tz));
  const std::string ymd = std::to_string(cs.year()) + "-" + two(cs.month()) + "-" + two(cs.day());
  switch (grain) {
    case Grain::hour:
      return ymd + "T" + two(cs.hour());
    case Grain::day:
      return ymd;
    case Grain::week: {
      const IsoWeek w = iso_week(from_civil(absl::CivilDay(cs)));
      return std::to_string(w.year) + "-W" + two(w.week);
    }
    case Grain::month:
      return std::to_string(cs.year()) + "-" + two(cs.month());
  }
  return ymd;
}

std::vector<std::string> bucket_labels(const DateRange& range, Grain grain) {
  std::vector<std::string> out;
  auto push_unique = [&out](std::string label) {
    if (out.empty() || out.back() != label) out.push_back(std::move(label));
  };
  if (grain == Grain::hour) {
    const Instant end = range_end(range);
    for (Instant t = range_start(range); t < end; t += std::chrono::hours{1}) {
      push_unique(bucket(t, Grain::hour, range.tz));
    }
    return out;
  }
  for (sys_days d{range.start}; d < sys_days{range.end}; d += days{1}) {
    const CivilDate cd{d};
    switch (grain) {
      case Grain::day:
        push_unique(format_date(cd));
        break;
      case Grain::week: {
        const IsoWeek w = iso_week(cd);
        push_unique(std::to_string(w.year) + "-W" + two(w.week));
        break;
      }
      case Grain::month:
        push_unique(std::to_string(year_of(cd)) + "-" + two(static_cast<int>(static_cast<unsigned>(cd.month()))));
        break;
      case Grain::hour:
        break;
    }
  }
  return out;
}

std::string format_date(CivilDate date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year_of(date), static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()));
  return buf;
}

std::optional<CivilDate> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == 4 || i == 7) continue;
    if (text[i] < '0' || text[i] > '9') return std::nullopt;
  }
  y = std::stoi(std::string(text.substr(0, 4)));
  m = static_cast<unsigned>(std::stoi(std::string(text.substr(5, 2))));
  d = static_cast<unsigned>(std::stoi(std::string(text.substr(8, 2))));
  const CivilDate date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::optional<Instant> parse_timestamp(std::string_view text) {
  absl::Time t;
  std::string err;
  if (!absl::ParseTime(absl::RFC3339_full, std::string(text), &t, &err)) return std::nullopt;
  return from_absl(t);
}

std::string format_timestamp(Instant ts) {
  return absl::FormatTime("%Y-%m-%dT%H:%M:%SZ", to_absl(ts), absl::UTCTimeZone());
}

std::string_view grain_name(Grain grain) {
  switch (grain) {
    case Grain::hour:
      return "hour";
    case Grain::day:
      return "day";
    case Grain::week:
      return "week";
    case Grain::month:
      return "month";
  }
  return "day";
}

std::optional<Grain> parse_grain(std::string_view text) {
  if (text == "hour") return Grain::hour;
  if (text == "day") return Grain::day;
  if (text == "week") return Grain::week;
  if (text == "month") return Grain::month;
  return std::nullopt;
}

// ---- JSON ----

namespace {

std::string_view unit_name(CalendarUnit u) {
  switch (u) {
    case CalendarUnit::week:
      return "week";
    case CalendarUnit::month:
      return "month";
    case CalendarUnit::quarter:
      return "quarter";
  }
  return "week";
}

CalendarUnit parse_unit(const std::string& s) {
  if (s == "week") return CalendarUnit::week;
  if (s == "month") return CalendarUnit::month;
  if (s == "quarter") return CalendarUnit::quarter;
  throw ParseError("unknown calendar unit: " + s);
}

CivilDate date_field(const nlohmann::json& j, const char* key) {
  auto d = parse_date(j.at(key).get<std::string>());
  if (!d) throw ParseError(std::string("bad date in field ") + key);
  return *d;
}

}  // namespace

nlohmann::json to_json(const DateExpr& expr) {
  return std::visit(
      [](const auto& e) -> nlohmann::json {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, SingleDay>) {
          return {{"type", "single_day"}, {"date", format_date(e.date)}};
        } else if constexpr (std::is_same_v<T, MonthOf>) {
          return {{"type", "month_of"}, {"year", e.year}, {"month", e.month}};
        } else if constexpr (std::is_same_v<T, QuarterOf>) {
          return {{"type", "quarter_of"}, {"year", e.year}, {"quarter", e.quarter}};
        } else if constexpr (std::is_same_v<T, RelativeDay>) {
          return {{"type", "relative_day"}, {"offset", e.offset}};
        } else if constexpr (std::is_same_v<T, RelativeCalendarUnit>) {
          return {{"type", "relative_calendar_unit"}, {"unit", unit_name(e.unit)}, {"offset", e.offset}};
        } else if constexpr (std::is_same_v<T, TrailingWindow>) {
          return {{"type", "trailing_window"}, {"n", e.n}, {"unit", e.unit == WindowUnit::weeks ? "weeks" : "days"}};
        } else if constexpr (std::is_same_v<T, ThisUnit>) {
          return {{"type", "this_unit"}, {"unit", unit_name(e.unit)}};
        } else {
          return {{"type", "explicit"}, {"start", format_date(e.start)}, {"end", format_date(e.end)}};
        }
      },
      expr);
}

DateExpr date_expr_from_json(const nlohmann::json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "single_day") return SingleDay{date_field(j, "date")};
    if (type == "month_of") return MonthOf{j.at("year").get<int>(), j.at("month").get<int>()};
    if (type == "quarter_of") return QuarterOf{j.at("year").get<int>(), j.at("quarter").get<int>()};
    if (type == "relative_day") return RelativeDay{j.at("offset").get<int>()};
    if (type == "relative_calendar_unit") {
      return RelativeCalendarUnit{parse_unit(j.at("unit").get<std::string>()), j.at("offset").get<int>()};
    }
    if (type == "trailing_window") {
      const std::string unit = j.at("unit").get<std::string>();
      if (unit != "days" && unit != "weeks") throw ParseError("unknown window unit: " + unit);
      return TrailingWindow{j.at("n").get<int>(), unit == "weeks" ? WindowUnit::weeks : WindowUnit::days};
    }
    if (type == "this_unit") return ThisUnit{parse_unit(j.at("unit").get<std::string>())};
    if (type == "explicit") return Explicit{date_field(j, "start"), date_field(j, "end")};
    throw ParseError("unknown date expression type: " + type);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed date expression: ") + e.what());
  }
}

nlohmann::json to_json(const DateRange& range) {
  return {{"start_date", format_date(range.start)}, {"end_date", format_date(range.end)}, {"tz", range.tz}};
}

DateRange date_range_from_json(const nlohmann::json& j) {
  try {
    return {date_field(j, "start_date"), date_field(j, "end_date"), j.value("tz", std::string("UTC"))};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed date range: ") + e.what());
  }
}

}  // namespace govq::dates
