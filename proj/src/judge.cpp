#include "govq/judge.hpp"

#include <algorithm>
#include <cmath>

#include "govq/errors.hpp"

namespace govq {

bool numbers_close(double a, double b, double rel_tol) {
  if (a == b) return true;
  return std::fabs(a - b) <= rel_tol * std::max(std::fabs(a), std::fabs(b));
}

namespace {

std::string show(const Cell& c) {
  if (const double* d = as_number(c)) return format_number(*d);
  if (const std::string* s = as_string(c)) return *s;
  return "null";
}

bool cells_close(const Cell& a, const Cell& b, double tol) {
  const double* x = as_number(a);
  const double* y = as_number(b);
  if (x && y) return numbers_close(*x, *y, tol);
  return a == b;
}

// Keys (non-numeric cells) first so rows pair up regardless of small numeric drift.
std::vector<std::size_t> sort_order(const std::vector<Column>& schema) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (!is_numeric(schema[i].type)) order.push_back(i);
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (is_numeric(schema[i].type)) order.push_back(i);
  }
  return order;
}

void sort_rows(std::vector<std::vector<Cell>>& rows, const std::vector<std::size_t>& order) {
  std::sort(rows.begin(), rows.end(), [&order](const auto& a, const auto& b) {
    for (std::size_t i : order) {
      if (a[i] < b[i]) return true;
      if (b[i] < a[i]) return false;
    }
    return false;
  });
}

}  // namespace

TableDiff compare_tables(const TabularResult& reference, const TabularResult& candidate, double rel_tol) {
  if (reference.schema.size() != candidate.schema.size()) {
    return {false, "The model response has " + std::to_string(candidate.schema.size()) +
                       " columns; the ground truth has " + std::to_string(reference.schema.size()) + "."};
  }
  std::vector<std::size_t> mapping;
  std::vector<bool> used(candidate.schema.size(), false);
  for (const Column& ref : reference.schema) {
    std::optional<std::size_t> hit;
    for (std::size_t j = 0; j < candidate.schema.size() && !hit; ++j) {
      if (!used[j] && candidate.schema[j].source == ref.source) hit = j;
    }
    if (!hit) return {false, "The model response has no column matching " + ref.name + " (" + ref.source + ")."};
    used[*hit] = true;
    mapping.push_back(*hit);
  }
  if (reference.rows.size() != candidate.rows.size()) {
    return {false, "The model response has " + std::to_string(candidate.rows.size()) +
                       " rows; the ground truth has " + std::to_string(reference.rows.size()) + "."};
  }

  auto ref_rows = reference.rows;
  std::vector<std::vector<Cell>> cand_rows;
  cand_rows.reserve(candidate.rows.size());
  for (const auto& row : candidate.rows) {
    std::vector<Cell> projected;
    projected.reserve(mapping.size());
    for (std::size_t j : mapping) projected.push_back(row[j]);
    cand_rows.push_back(std::move(projected));
  }
  const auto order = sort_order(reference.schema);
  sort_rows(ref_rows, order);
  sort_rows(cand_rows, order);

  for (std::size_t r = 0; r < ref_rows.size(); ++r) {
    for (std::size_t c = 0; c < reference.schema.size(); ++c) {
      if (cells_close(ref_rows[r][c], cand_rows[r][c], rel_tol)) continue;
      return {false, "The " + reference.schema[c].name + " value in the model response (" + show(cand_rows[r][c]) +
                         ") differs from the ground-truth value (" + show(ref_rows[r][c]) + ")."};
    }
  }
  return {true, ""};
}

nlohmann::json to_json(const AnswerRecord& a) {
  nlohmann::json filters = nlohmann::json::array();
  for (const FilterClause& f : a.filters) filters.push_back(to_json(f));
  nlohmann::json j = {{"table", nullptr},
                      {"target_ids", a.target_ids},
                      {"date_range", nullptr},
                      {"filters", std::move(filters)},
                      {"text", a.text}};
  if (a.table) j["table"] = to_json(*a.table);
  if (a.range) j["date_range"] = dates::to_json(*a.range);
  return j;
}

AnswerRecord answer_from_json(const nlohmann::json& j) {
  try {
    AnswerRecord a;
    if (j.contains("table") && !j["table"].is_null()) a.table = tabular_from_json(j["table"]);
    a.target_ids = j.value("target_ids", std::vector<std::string>{});
    if (j.contains("date_range") && !j["date_range"].is_null()) a.range = dates::date_range_from_json(j["date_range"]);
    for (const auto& f : j.value("filters", nlohmann::json::array())) a.filters.push_back(filter_from_json(f));
    a.text = j.value("text", std::string{});
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed answer: ") + e.what());
  }
}

JudgeVerdict OracleJudge::judge(std::string_view, const AnswerRecord& reference, const AnswerRecord& candidate) const {
  auto incorrect = [](std::string why) { return JudgeVerdict{Verdict::Incorrect, std::move(why)}; };
  if (!reference.table) throw Error("reference answer has no table");
  if (!candidate.table) return incorrect("The model response contains no result table.");

  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  if (sorted(reference.target_ids) != sorted(candidate.target_ids)) {
    return incorrect("The model response covers a different set of targets than the ground truth.");
  }
  if (reference.range != candidate.range) {
    std::string got = candidate.range ? dates::to_json(*candidate.range).dump() : "none";
    std::string want = reference.range ? dates::to_json(*reference.range).dump() : "none";
    return incorrect("The model response uses date range " + got + " instead of " + want + ".");
  }
  auto filter_keys = [](const std::vector<FilterClause>& fs) {
    std::vector<std::string> keys;
    for (const FilterClause& f : fs) {
      FilterClause norm = f;
      if (norm.op == FilterOp::in) std::sort(norm.values.begin(), norm.values.end());
      keys.push_back(to_json(norm).dump());
    }
    std::sort(keys.begin(), keys.end());
    return keys;
  };
  if (filter_keys(reference.filters) != filter_keys(candidate.filters)) {
    return incorrect("The model response applies different filters than the ground truth.");
  }
  const TableDiff diff = compare_tables(*reference.table, *candidate.table, tol_);
  if (!diff.equal) return incorrect(diff.message);
  return {Verdict::Correct, std::nullopt};
}

}  // namespace govq
