#include <algorithm>
#include <functional>
#include <regex>

#include "govq/planner.hpp"
#include "govq/util.hpp"

namespace govq {

namespace {

using namespace std::chrono;

const char* const kMonthAlt =
    "january|february|march|april|may|june|july|august|september|october|november|december|"
    "jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec";

int month_number(const std::string& name) {
  static const std::vector<std::string> kNames = {"jan", "feb", "mar", "apr", "may", "jun",
                                                  "jul", "aug", "sep", "oct", "nov", "dec"};
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (name.rfind(kNames[i], 0) == 0) return static_cast<int>(i) + 1;
  }
  return 0;
}

std::optional<dates::CivilDate> make_date(int y, int m, int d) {
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return ymd;
}

dates::CalendarUnit unit_of(const std::string& w) {
  if (w == "week") return dates::CalendarUnit::week;
  if (w == "quarter") return dates::CalendarUnit::quarter;
  return dates::CalendarUnit::month;
}

using Builder = std::function<std::optional<dates::DateExpr>(const std::smatch&, dates::CivilDate)>;

struct Pattern {
  std::regex rx;
  Builder build;
};

const std::vector<Pattern>& patterns() {
  auto rx = [](const std::string& p) { return std::regex(p, std::regex::icase | std::regex::ECMAScript); };
  const std::string months = std::string("(") + kMonthAlt + ")";
  static const std::vector<Pattern> kPatterns = {
      {rx(R"(\bfrom (\d{4})-(\d{2})-(\d{2}) (to|until|through) (\d{4})-(\d{2})-(\d{2})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         auto a = make_date(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
         auto b = make_date(std::stoi(m[5]), std::stoi(m[6]), std::stoi(m[7]));
         if (!a || !b) return std::nullopt;
         auto end = sys_days{*b};
         if (m[4] == "through") end += days{1};
         return dates::Explicit{*a, year_month_day{end}};
       }},
      {rx(R"(\b(\d{4})-(\d{2})-(\d{2})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         auto d = make_date(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
         if (!d) return std::nullopt;
         return dates::SingleDay{*d};
       }},
      {rx(R"(\b(?:the )?(?:last|past|previous) (\d{1,3}) (days?|weeks?)\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         const int n = std::stoi(m[1]);
         if (n < 1) return std::nullopt;
         const bool weeks = m[2].str().rfind("week", 0) == 0;
         return dates::TrailingWindow{n, weeks ? dates::WindowUnit::weeks : dates::WindowUnit::days};
       }},
      {rx(R"(\b(?:the )?(?:last|previous|past) (week|month|quarter)\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         return dates::RelativeCalendarUnit{unit_of(m[1]), -1};
       }},
      {rx(R"(\bthis (week|month|quarter)\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         return dates::ThisUnit{unit_of(m[1])};
       }},
      {rx(R"(\byesterday\b)"),
       [](const std::smatch&, dates::CivilDate) -> std::optional<dates::DateExpr> { return dates::RelativeDay{-1}; }},
      {rx(R"(\btoday\b)"),
       [](const std::smatch&, dates::CivilDate) -> std::optional<dates::DateExpr> { return dates::RelativeDay{0}; }},
      {rx(R"(\bq([1-4]) (\d{4})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         return dates::QuarterOf{std::stoi(m[2]), std::stoi(m[1])};
       }},
      {rx(R"(\b(first|second|third|fourth) quarter of (\d{4})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         const std::string w = m[1];
         const int q = w == "first" ? 1 : w == "second" ? 2 : w == "third" ? 3 : 4;
         return dates::QuarterOf{std::stoi(m[2]), q};
       }},
      {rx("\\b" + months + R"( (\d{1,2})(?:st|nd|rd|th)?,? (\d{4})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         auto d = make_date(std::stoi(m[3]), month_number(m[1]), std::stoi(m[2]));
         if (!d) return std::nullopt;
         return dates::SingleDay{*d};
       }},
      {rx("\\b" + months + R"( (\d{4})\b)"),
       [](const std::smatch& m, dates::CivilDate) -> std::optional<dates::DateExpr> {
         return dates::MonthOf{std::stoi(m[2]), month_number(m[1])};
       }},
      {rx("\\b" + months + R"( (\d{1,2})(?:st|nd|rd|th)?\b)"),
       [](const std::smatch& m, dates::CivilDate today) -> std::optional<dates::DateExpr> {
         auto d = make_date(static_cast<int>(today.year()), month_number(m[1]), std::stoi(m[2]));
         if (!d) return std::nullopt;
         return dates::SingleDay{*d};
       }},
      {rx("\\b(?:in|during|for) " + months + "\\b(?! \\d)"),
       [](const std::smatch& m, dates::CivilDate today) -> std::optional<dates::DateExpr> {
         return dates::MonthOf{static_cast<int>(today.year()), month_number(m[1])};
       }},
  };
  return kPatterns;
}

}  // namespace

std::vector<DatePhrase> find_date_phrases(std::string_view text, dates::CivilDate today) {
  std::vector<DatePhrase> found;
  const std::string s = util::to_lower(text);
  for (const Pattern& p : patterns()) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), p.rx); it != std::sregex_iterator(); ++it) {
      auto expr = p.build(*it, today);
      if (!expr) continue;
      found.push_back({static_cast<std::size_t>(it->position()), static_cast<std::size_t>(it->length()), *expr});
    }
  }
  // earlier patterns win ties because stable_sort keeps their relative order
  std::stable_sort(found.begin(), found.end(), [](const DatePhrase& a, const DatePhrase& b) {
    if (a.pos != b.pos) return a.pos < b.pos;
    return a.len > b.len;
  });
  std::vector<DatePhrase> out;
  std::size_t covered = 0;
  for (DatePhrase& d : found) {
    if (!out.empty() && d.pos < covered) continue;
    covered = d.pos + d.len;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace govq
