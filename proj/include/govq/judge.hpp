#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/date_resolver.hpp"
#include "govq/extract.hpp"
#include "govq/query_model.hpp"
#include "govq/tabular.hpp"

namespace govq {

inline constexpr double kJudgeTolerance = 1e-6;

struct TableDiff {
  bool equal = true;
  std::string message;
};

/// Row-order-insensitive comparison. Columns are paired by source, not alias;
/// numbers match within `rel_tol` relative difference.
TableDiff compare_tables(const TabularResult& reference, const TabularResult& candidate,
                         double rel_tol = kJudgeTolerance);

bool numbers_close(double a, double b, double rel_tol);

/// What a judge sees of one answer.
struct AnswerRecord {
  std::optional<TabularResult> table;
  /// Sorted request targets; empty means the principal's whole scope.
  std::vector<std::string> target_ids;
  std::optional<dates::DateRange> range;
  std::vector<FilterClause> filters;
  std::string text;
};

nlohmann::json to_json(const AnswerRecord& a);
AnswerRecord answer_from_json(const nlohmann::json& j);

class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string name() const = 0;
  /// Throws JudgeUnavailable when the judge cannot be reached.
  virtual JudgeVerdict judge(std::string_view query, const AnswerRecord& reference,
                             const AnswerRecord& candidate) const = 0;
};

/// Correct iff tables agree, target sets agree, date ranges agree and filter
/// multisets agree.
class OracleJudge : public Judge {
 public:
  explicit OracleJudge(double rel_tol = kJudgeTolerance) : tol_(rel_tol) {}
  std::string name() const override { return "oracle"; }
  JudgeVerdict judge(std::string_view query, const AnswerRecord& reference,
                     const AnswerRecord& candidate) const override;

 private:
  double tol_;
};

}  // namespace govq
