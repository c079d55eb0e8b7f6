#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "govq/date_resolver.hpp"
#include "govq/errors.hpp"

using namespace govq;
using namespace govq::dates;
using govq::testing::at;
using govq::testing::ymd;

namespace {

nlohmann::json golden_dates() {
  std::ifstream in(govq::testing::golden("dates.json"));
  return nlohmann::json::parse(in);
}

std::pair<std::string, std::string> strs(const DateRange& r) { return {format_date(r.start), format_date(r.end)}; }

}  // namespace

TEST_CASE("single day is [d, d+1]") {
  const DateRange r = resolve(SingleDay{ymd(2025, 4, 14)}, at("2025-06-18T17:00:00Z"), "UTC");
  CHECK(format_date(r.start) == "2025-04-14");
  CHECK(format_date(r.end) == "2025-04-15");
  CHECK(r.tz == "UTC");
}

TEST_CASE("golden resolve table") {
  const auto j = golden_dates();
  REQUIRE(j["resolve"].size() >= 26);
  for (const auto& c : j["resolve"]) {
    CAPTURE(c.dump());
    const DateExpr e = date_expr_from_json(c["expr"]);
    const DateRange r = resolve(e, at(c["now"]), c["tz"].get<std::string>());
    CHECK(format_date(r.start) == c["expected"][0].get<std::string>());
    CHECK(format_date(r.end) == c["expected"][1].get<std::string>());
    // Wire round trip keeps the expression.
    CHECK(date_expr_from_json(to_json(e)) == e);
  }
}

TEST_CASE("trailing weeks in a western timezone") {
  const DateRange r = resolve(TrailingWindow{4, WindowUnit::weeks}, at("2025-05-15T17:00:00Z"), "America/Los_Angeles");
  CHECK(strs(r) == std::pair<std::string, std::string>{"2025-04-17", "2025-05-15"});
  CHECK(r.tz == "America/Los_Angeles");
}

TEST_CASE("quarter of") {
  CHECK(strs(resolve(QuarterOf{2025, 1}, at("2025-06-18T17:00:00Z"), "UTC")) ==
        std::pair<std::string, std::string>{"2025-01-01", "2025-04-01"});
}

TEST_CASE("invalid expressions") {
  const Instant now = at("2025-06-18T17:00:00Z");
  CHECK_THROWS_AS(resolve(MonthOf{2025, 13}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(MonthOf{2025, 0}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(QuarterOf{2025, 5}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(TrailingWindow{0, WindowUnit::days}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(SingleDay{ymd(2025, 2, 30)}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(Explicit{ymd(2025, 3, 2), ymd(2025, 3, 1)}, now, "UTC"), InvalidExpr);
  CHECK_THROWS_AS(resolve(RelativeDay{0}, now, "Mars/Olympus"), InvalidExpr);
}

TEST_CASE("iso weeks match the reference table") {
  for (const auto& c : golden_dates()["iso_weeks"]) {
    CAPTURE(c.dump());
    const auto d = parse_date(c["date"].get<std::string>());
    REQUIRE(d);
    const IsoWeek w = iso_week(*d);
    CHECK(w.year == c["year"].get<int>());
    CHECK(w.week == c["week"].get<int>());
  }
}

TEST_CASE("bucket labels") {
  CHECK(bucket(at("2025-01-01T12:00:00Z"), Grain::week, "UTC") == "2025-W01");
  CHECK(bucket(at("2024-12-30T00:00:00Z"), Grain::week, "UTC") == "2025-W01");
  CHECK(bucket(at("2025-04-14T23:30:00-07:00"), Grain::day, "America/Los_Angeles") == "2025-04-14");
  CHECK(bucket(at("2025-04-14T23:30:00+09:00"), Grain::day, "Asia/Tokyo") == "2025-04-14");
  for (const auto& c : golden_dates()["buckets"]) {
    CAPTURE(c.dump());
    const Instant ts = at(c["ts"]);
    const std::string tz = c["tz"];
    CHECK(bucket(ts, Grain::hour, tz) == c["hour"].get<std::string>());
    CHECK(bucket(ts, Grain::day, tz) == c["day"].get<std::string>());
    CHECK(bucket(ts, Grain::week, tz) == c["week"].get<std::string>());
    CHECK(bucket(ts, Grain::month, tz) == c["month"].get<std::string>());
  }
}

TEST_CASE("half-open containment") {
  const DateRange r{ymd(2025, 4, 14), ymd(2025, 4, 15), "UTC"};
  CHECK(contains(r, at("2025-04-14T00:00:00Z")));
  CHECK(contains(r, at("2025-04-14T23:59:59Z")));
  CHECK_FALSE(contains(r, at("2025-04-15T00:00:00Z")));
  const DateRange la{ymd(2025, 4, 14), ymd(2025, 4, 15), "America/Los_Angeles"};
  CHECK(contains(la, at("2025-04-14T07:00:00Z")));
  CHECK_FALSE(contains(la, at("2025-04-15T07:00:00Z")));
}

TEST_CASE("consecutive months compose") {
  const Instant now = at("2025-06-18T17:00:00Z");
  for (int y = 2023; y <= 2026; ++y) {
    for (int m = 1; m <= 12; ++m) {
      const DateRange a = resolve(MonthOf{y, m}, now, "UTC");
      const DateRange b = resolve(m == 12 ? MonthOf{y + 1, 1} : MonthOf{y, m + 1}, now, "UTC");
      CHECK(a.end == b.start);
      const DateRange q = resolve(QuarterOf{y, (m - 1) / 3 + 1}, now, "UTC");
      CHECK(q.start <= a.start);
      CHECK(a.end <= q.end);
    }
  }
}

TEST_CASE("buckets tile ranges, including across DST changes") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> zones = {"UTC", "America/Los_Angeles", "Europe/Berlin", "Asia/Tokyo",
                                          "Australia/Lord_Howe"};
  const std::vector<Grain> grains = {Grain::hour, Grain::day, Grain::week, Grain::month};
  const std::chrono::sys_days base{std::chrono::year{2024} / 1 / 1};
  for (int i = 0; i < 60; ++i) {
    const std::string tz = zones[rng() % zones.size()];
    const Grain g = grains[rng() % grains.size()];
    const int start = static_cast<int>(rng() % 700);
    const int len = 1 + static_cast<int>(rng() % (g == Grain::hour ? 3 : 70));
    const DateRange r{CivilDate{base + std::chrono::days{start}}, CivilDate{base + std::chrono::days{start + len}}, tz};
    CAPTURE(tz);
    CAPTURE(format_date(r.start));
    CAPTURE(grain_name(g));
    const auto labels = bucket_labels(r, g);
    REQUIRE_FALSE(labels.empty());
    CHECK(std::set<std::string>(labels.begin(), labels.end()).size() == labels.size());
    // Walk the range in 15-minute steps: labels appear in order, none is skipped.
    std::size_t cursor = 0;
    std::set<std::string> seen;
    for (Instant t = range_start(r); t < range_end(r); t += std::chrono::minutes{15}) {
      const std::string b = bucket(t, g, tz);
      while (cursor < labels.size() && labels[cursor] != b) ++cursor;
      REQUIRE(cursor < labels.size());
      seen.insert(b);
    }
    CHECK(seen.size() == labels.size());
  }
}

TEST_CASE("DST days are 23 and 25 hours long") {
  const DateRange spring{ymd(2025, 3, 9), ymd(2025, 3, 10), "America/Los_Angeles"};
  const DateRange fall{ymd(2025, 11, 2), ymd(2025, 11, 3), "America/Los_Angeles"};
  CHECK(range_end(spring) - range_start(spring) == std::chrono::hours{23});
  CHECK(range_end(fall) - range_start(fall) == std::chrono::hours{25});
  CHECK(bucket_labels(spring, Grain::hour).size() == 23);
  CHECK(bucket_labels(fall, Grain::hour).size() == 24);  // 01:00 repeats under one label
  CHECK(bucket_labels(spring, Grain::day) == std::vector<std::string>{"2025-03-09"});
}

TEST_CASE("date and timestamp parsing") {
  CHECK(parse_date("2025-02-29") == std::nullopt);
  CHECK(parse_date("2024-02-29").has_value());
  CHECK(parse_date("2025-1-1") == std::nullopt);
  CHECK(parse_date("") == std::nullopt);
  CHECK(parse_timestamp("2025-04-14T10:00:00") == std::nullopt);
  CHECK(parse_timestamp("2025-04-14T10:00:00+02:00") == parse_timestamp("2025-04-14T08:00:00Z"));
  CHECK(format_timestamp(at("2025-04-14T08:00:00Z")) == "2025-04-14T08:00:00Z");
  CHECK(valid_timezone("Europe/Berlin"));
  CHECK_FALSE(valid_timezone("Nowhere/City"));
}

TEST_CASE("resolve is pure") {
  const Instant now = at("2025-06-18T17:00:00Z");
  const DateExpr e = ThisUnit{CalendarUnit::week};
  CHECK(resolve(e, now, "Asia/Tokyo") == resolve(e, now, "Asia/Tokyo"));
}
