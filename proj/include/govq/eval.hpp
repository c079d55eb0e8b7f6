#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "govq/analytics_store.hpp"
#include "govq/judge.hpp"
#include "govq/orchestrator.hpp"

namespace govq {

enum class IntentClass { point_metric, trend_line, categorical_breakdown };
std::string_view intent_class_name(IntentClass c);
std::optional<IntentClass> parse_intent_class(std::string_view text);

struct UseCase {
  std::string id;
  std::string query;
  IntentClass intent_class = IntentClass::point_metric;
  AnalyticsRequest gold_request;
  TabularResult gold_answer;
  std::string principal_ref;
  dates::Instant now{};
};

nlohmann::json to_json(const UseCase& u);
UseCase use_case_from_json(const nlohmann::json& j);

/// Named principals the corpus refers to.
struct PrincipalSpec {
  std::string user_id;
  std::vector<std::string> grants;
  std::set<std::string> capabilities;
};
using PrincipalBook = std::map<std::string, PrincipalSpec>;

PrincipalBook load_principals(const std::filesystem::path& path);
PrincipalBook principals_from_json(const nlohmann::json& j);
/// Throws CorpusError for an unknown reference.
Principal principal_for(const PrincipalBook& book, const std::string& ref, const OrgIndex& org);

/// Hand-written cases before gold answers are computed.
struct CaseSpec {
  std::string id;
  std::string query;
  IntentClass intent_class = IntentClass::point_metric;
  AnalyticsRequest gold_request;
  std::string principal_ref;
  dates::Instant now{};
};

struct CorpusSpec {
  std::vector<CaseSpec> cases;
  std::size_t min_cases = 30;
};

CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

/// Executes each gold request to obtain its answer. Throws SpecError when
/// there are too few cases, classes are unbalanced by more than one, ids
/// repeat, or a gold request fails validation or execution.
std::vector<UseCase> build_corpus(const CorpusSpec& spec, const Dataset& dataset, const PrincipalBook& principals);

std::vector<UseCase> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<UseCase>& corpus, const std::filesystem::path& path);

/// Throws CorpusError when the corpus is empty or a gold answer no longer
/// matches re-execution of its gold request.
void check_corpus(const std::vector<UseCase>& corpus, const Dataset& dataset, const PrincipalBook& principals);

/// What the system under test produced for one case.
struct CaseRun {
  bool executed = false;
  AnswerRecord answer;
  ResponseStatus status = ResponseStatus::failed;
  int clarifications = 0;
  int query_attempts = 0;
};

using SystemUnderTest = std::function<CaseRun(const UseCase&, const Principal&)>;

/// Runs the orchestrator in a fresh session per case, with the clock pinned to
/// the case's `now`.
SystemUnderTest orchestrator_system(std::function<std::shared_ptr<const Dataset>()> dataset,
                                    std::shared_ptr<const PlannerBackend> planner, std::string timezone = "UTC");

AnswerRecord reference_answer(const UseCase& u, const Catalog& catalog);

struct CaseResult {
  std::string id;
  IntentClass intent_class = IntentClass::point_metric;
  bool executed = false;
  std::string status;
  int clarifications = 0;
  int query_attempts = 0;
  /// Judge name to verdict; nullopt marks an abstention.
  std::map<std::string, std::optional<JudgeVerdict>> verdicts;
};

struct JudgeScore {
  std::size_t correct = 0;
  std::size_t judged = 0;
  std::size_t abstained = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::size_t n_cases = 0;
  std::size_t executed_count = 0;
  double exec_success_rate = 0.0;
  std::map<std::string, JudgeScore> judges;
  double mean_accuracy = 0.0;
  std::vector<CaseResult> per_case;
};

/// Percentage, unrounded: 87 of 90 is 96.666...
double rate_percent(std::size_t numerator, std::size_t denominator);
/// Two decimals, as reported.
std::string format_percent(double pct);

/// Headline numbers recomputed from per_case entries.
EvalReport summarize(std::vector<CaseResult> per_case, const std::vector<std::string>& judge_names);

struct EvalOptions {
  std::size_t threads = 1;
};

EvalReport run_eval(const std::vector<UseCase>& corpus, const SystemUnderTest& system,
                    const std::vector<std::shared_ptr<const Judge>>& judges, const Dataset& dataset,
                    const PrincipalBook& principals, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace govq
