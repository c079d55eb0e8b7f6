#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace govq::dates {

using CivilDate = std::chrono::year_month_day;
using Instant = std::chrono::sys_seconds;

/// Half-open calendar range [start, end) interpreted in an IANA timezone.
struct DateRange {
  CivilDate start;
  CivilDate end;
  std::string tz = "UTC";

  friend bool operator==(const DateRange&, const DateRange&) = default;
};

enum class Grain { hour, day, week, month };
enum class CalendarUnit { week, month, quarter };
enum class WindowUnit { days, weeks };

struct SingleDay {
  CivilDate date;
  friend bool operator==(const SingleDay&, const SingleDay&) = default;
};
struct MonthOf {
  int year = 0;
  int month = 0;
  friend bool operator==(const MonthOf&, const MonthOf&) = default;
};
struct QuarterOf {
  int year = 0;
  int quarter = 0;
  friend bool operator==(const QuarterOf&, const QuarterOf&) = default;
};
/// offset 0 is today, -1 yesterday.
struct RelativeDay {
  int offset = 0;
  friend bool operator==(const RelativeDay&, const RelativeDay&) = default;
};
/// Full calendar unit relative to the one containing `now`; -1 is "last".
struct RelativeCalendarUnit {
  CalendarUnit unit = CalendarUnit::month;
  int offset = -1;
  friend bool operator==(const RelativeCalendarUnit&, const RelativeCalendarUnit&) = default;
};
/// n units ending at today 00:00, today excluded.
struct TrailingWindow {
  int n = 1;
  WindowUnit unit = WindowUnit::days;
  friend bool operator==(const TrailingWindow&, const TrailingWindow&) = default;
};
/// Start of the current unit through the end of today.
struct ThisUnit {
  CalendarUnit unit = CalendarUnit::week;
  friend bool operator==(const ThisUnit&, const ThisUnit&) = default;
};
struct Explicit {
  CivilDate start;
  CivilDate end;
  friend bool operator==(const Explicit&, const Explicit&) = default;
};

using DateExpr = std::variant<SingleDay, MonthOf, QuarterOf, RelativeDay, RelativeCalendarUnit,
                              TrailingWindow, ThisUnit, Explicit>;

struct IsoWeek {
  int year = 0;
  int week = 0;
  friend bool operator==(const IsoWeek&, const IsoWeek&) = default;
};

/// Evaluates a date expression against a clock reading. Throws InvalidExpr.
DateRange resolve(const DateExpr& expr, Instant now, std::string_view tz);

/// Label of the bucket containing `ts`, computed in `tz`:
/// hour "YYYY-MM-DDTHH", day "YYYY-MM-DD", week "GGGG-Www", month "YYYY-MM".
std::string bucket(Instant ts, Grain grain, std::string_view tz);

/// Every bucket label overlapping the range, in chronological order. Each
/// instant in [start, end) maps to exactly one returned label.
std::vector<std::string> bucket_labels(const DateRange& range, Grain grain);

Instant range_start(const DateRange& range);
Instant range_end(const DateRange& range);
bool contains(const DateRange& range, Instant ts);

CivilDate local_date(Instant ts, std::string_view tz);
IsoWeek iso_week(CivilDate date);
bool valid_timezone(std::string_view tz);

std::string format_date(CivilDate date);
std::optional<CivilDate> parse_date(std::string_view text);
/// RFC 3339 with an explicit offset ("Z" or +hh:mm).
std::optional<Instant> parse_timestamp(std::string_view text);
std::string format_timestamp(Instant ts);

std::string_view grain_name(Grain grain);
std::optional<Grain> parse_grain(std::string_view text);

nlohmann::json to_json(const DateExpr& expr);
/// Throws ParseError on an unknown or malformed expression object.
DateExpr date_expr_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DateRange& range);
DateRange date_range_from_json(const nlohmann::json& j);

}  // namespace govq::dates
