#include "govq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include "govq/errors.hpp"

namespace govq {

std::string_view intent_class_name(IntentClass c) {
  switch (c) {
    case IntentClass::point_metric:
      return "point_metric";
    case IntentClass::trend_line:
      return "trend_line";
    case IntentClass::categorical_breakdown:
      return "categorical_breakdown";
  }
  return "point_metric";
}

std::optional<IntentClass> parse_intent_class(std::string_view text) {
  for (IntentClass c : {IntentClass::point_metric, IntentClass::trend_line, IntentClass::categorical_breakdown}) {
    if (intent_class_name(c) == text) return c;
  }
  return std::nullopt;
}

namespace {

IntentClass intent_class_at(const nlohmann::json& j) {
  auto c = parse_intent_class(j.at("intent_class").get<std::string>());
  if (!c) throw ParseError("unknown intent_class " + j.at("intent_class").get<std::string>());
  return *c;
}

dates::Instant instant_at(const nlohmann::json& j, const char* key) {
  auto t = dates::parse_timestamp(j.at(key).get<std::string>());
  if (!t) throw ParseError(std::string("bad timestamp in ") + key);
  return *t;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw CorpusError(path.string() + " is not valid JSON");
  return j;
}

}  // namespace

nlohmann::json to_json(const UseCase& u) {
  return {{"id", u.id},
          {"query", u.query},
          {"intent_class", intent_class_name(u.intent_class)},
          {"gold_request", to_json(u.gold_request)},
          {"gold_answer", to_json(u.gold_answer)},
          {"principal_ref", u.principal_ref},
          {"now", dates::format_timestamp(u.now)}};
}

UseCase use_case_from_json(const nlohmann::json& j) {
  try {
    UseCase u;
    u.id = j.at("id").get<std::string>();
    u.query = j.at("query").get<std::string>();
    u.intent_class = intent_class_at(j);
    u.gold_request = request_from_json(j.at("gold_request"));
    u.gold_answer = tabular_from_json(j.at("gold_answer"));
    u.principal_ref = j.at("principal_ref").get<std::string>();
    u.now = instant_at(j, "now");
    return u;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed use case: ") + e.what());
  }
}

PrincipalBook principals_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw CorpusError("principals must be an object keyed by reference");
  PrincipalBook book;
  try {
    for (const auto& [ref, p] : j.items()) {
      PrincipalSpec s;
      s.user_id = p.at("user_id").get<std::string>();
      s.grants = p.value("grants", std::vector<std::string>{});
      s.capabilities = p.value("capabilities", std::set<std::string>{});
      book.emplace(ref, std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorpusError(std::string("malformed principals: ") + e.what());
  }
  return book;
}

PrincipalBook load_principals(const std::filesystem::path& path) { return principals_from_json(read_json_file(path)); }

Principal principal_for(const PrincipalBook& book, const std::string& ref, const OrgIndex& org) {
  auto it = book.find(ref);
  if (it == book.end()) throw CorpusError("unknown principal_ref " + ref);
  try {
    return make_principal(it->second.user_id, org, it->second.grants, it->second.capabilities);
  } catch (const UnknownTarget& e) {
    throw CorpusError("principal " + ref + ": " + e.what());
  }
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec spec;
  try {
    spec.min_cases = j.value("min_cases", spec.min_cases);
    for (const auto& c : j.at("cases")) {
      CaseSpec cs;
      cs.id = c.at("id").get<std::string>();
      cs.query = c.at("query").get<std::string>();
      cs.intent_class = intent_class_at(c);
      cs.gold_request = request_from_json(c.at("gold_request"));
      cs.principal_ref = c.at("principal_ref").get<std::string>();
      cs.now = instant_at(c, "now");
      spec.cases.push_back(std::move(cs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed corpus spec: ") + e.what());
  } catch (const ParseError& e) {
    throw SpecError(std::string("malformed corpus spec: ") + e.what());
  }
  return spec;
}

CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SpecError(path.string() + " is not valid JSON");
  return corpus_spec_from_json(j);
}

namespace {

TabularResult execute_gold(const AnalyticsRequest& req, const Principal& principal, const Dataset& dataset) {
  const ValidationResult v = validate(req, dataset.catalog);
  if (const auto* err = std::get_if<ValidationError>(&v)) throw SpecError(err->message());
  return execute(std::get<ValidatedRequest>(v), principal, dataset);
}

}  // namespace

std::vector<UseCase> build_corpus(const CorpusSpec& spec, const Dataset& dataset, const PrincipalBook& principals) {
  if (spec.cases.size() < spec.min_cases) {
    throw SpecError("corpus needs at least " + std::to_string(spec.min_cases) + " cases, got " +
                    std::to_string(spec.cases.size()));
  }
  std::map<IntentClass, std::size_t> per_class;
  std::set<std::string> ids;
  for (const CaseSpec& c : spec.cases) {
    per_class[c.intent_class] += 1;
    if (!ids.insert(c.id).second) throw SpecError("duplicate case id " + c.id);
  }
  std::size_t lo = spec.cases.size();
  std::size_t hi = 0;
  for (IntentClass c : {IntentClass::point_metric, IntentClass::trend_line, IntentClass::categorical_breakdown}) {
    lo = std::min(lo, per_class[c]);
    hi = std::max(hi, per_class[c]);
  }
  if (hi - lo > 1) throw SpecError("intent classes are unbalanced");

  std::vector<UseCase> out;
  for (const CaseSpec& c : spec.cases) {
    UseCase u{c.id, c.query, c.intent_class, c.gold_request, {}, c.principal_ref, c.now};
    try {
      const Principal p = principal_for(principals, c.principal_ref, dataset.org);
      u.gold_answer = execute_gold(c.gold_request, p, dataset);
    } catch (const Error& e) {
      throw SpecError("case " + c.id + ": " + e.what());
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<UseCase> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read " + path.string());
  std::vector<UseCase> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CorpusError(path.string() + ":" + std::to_string(n) + ": not valid JSON");
    try {
      out.push_back(use_case_from_json(j));
    } catch (const ParseError& e) {
      throw CorpusError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_corpus(const std::vector<UseCase>& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const UseCase& u : corpus) out << to_json(u).dump() << "\n";
}

void check_corpus(const std::vector<UseCase>& corpus, const Dataset& dataset, const PrincipalBook& principals) {
  if (corpus.empty()) throw CorpusError("corpus is empty");
  std::set<std::string> ids;
  for (const UseCase& u : corpus) {
    if (!ids.insert(u.id).second) throw CorpusError("duplicate case id " + u.id);
    TabularResult again;
    try {
      again = execute_gold(u.gold_request, principal_for(principals, u.principal_ref, dataset.org), dataset);
    } catch (const SpecError& e) {
      throw CorpusError("case " + u.id + ": gold request no longer validates: " + e.what());
    } catch (const PermissionError& e) {
      throw CorpusError("case " + u.id + ": gold request not permitted: " + e.what());
    }
    const TableDiff d = compare_tables(u.gold_answer, again, 1e-12);
    if (!d.equal) throw CorpusError("case " + u.id + ": gold answer drifted: " + d.message);
  }
}

AnswerRecord reference_answer(const UseCase& u, const Catalog& catalog) {
  AnswerRecord a;
  a.table = u.gold_answer;
  const ValidationResult v = validate(u.gold_request, catalog);
  if (const auto* vr = std::get_if<ValidatedRequest>(&v)) {
    a.target_ids = vr->targets;
    a.range = vr->date_range;
    a.filters = vr->filters;
  }
  return a;
}

SystemUnderTest orchestrator_system(std::function<std::shared_ptr<const Dataset>()> dataset,
                                    std::shared_ptr<const PlannerBackend> planner, std::string timezone) {
  return [dataset = std::move(dataset), planner = std::move(planner), timezone = std::move(timezone)](
             const UseCase& u, const Principal& principal) {
    OrchestratorDeps deps;
    deps.dataset = dataset;
    deps.planner = planner;
    const dates::Instant now = u.now;
    deps.clock = [now] { return now; };
    deps.timezone = timezone;
    Orchestrator orch(std::move(deps));
    TurnResult r = orch.handle_turn(new_session("eval-" + u.id, principal), u.query);

    CaseRun run;
    run.status = r.response.status;
    run.query_attempts = r.query_attempts;
    for (const AuditEntry& e : r.state.audit) run.clarifications += e.event == AuditEvent::clarify ? 1 : 0;
    run.executed = r.response.status == ResponseStatus::answered && r.response.table.has_value();
    run.answer.table = r.response.table;
    run.answer.text = r.response.text;
    if (r.executed_request) {
      run.answer.target_ids = r.executed_request->targets;
      run.answer.range = r.executed_request->date_range;
      run.answer.filters = r.executed_request->filters;
    }
    return run;
  };
}

double rate_percent(std::size_t numerator, std::size_t denominator) {
  if (denominator == 0) return 0.0;
  return 100.0 * static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

EvalReport summarize(std::vector<CaseResult> per_case, const std::vector<std::string>& judge_names) {
  EvalReport r;
  r.n_cases = per_case.size();
  for (const std::string& name : judge_names) r.judges[name] = JudgeScore{};
  for (const CaseResult& c : per_case) {
    r.executed_count += c.executed ? 1 : 0;
    for (const auto& [name, verdict] : c.verdicts) {
      JudgeScore& s = r.judges[name];
      if (!verdict) {
        s.abstained += 1;
        continue;
      }
      s.judged += 1;
      s.correct += verdict->verdict == Verdict::Correct ? 1 : 0;
    }
  }
  r.exec_success_rate = rate_percent(r.executed_count, r.n_cases);
  double sum = 0.0;
  for (auto& [_, s] : r.judges) {
    s.accuracy = rate_percent(s.correct, s.judged);
    sum += s.accuracy;
  }
  r.mean_accuracy = r.judges.empty() ? 0.0 : sum / static_cast<double>(r.judges.size());
  r.per_case = std::move(per_case);
  return r;
}

EvalReport run_eval(const std::vector<UseCase>& corpus, const SystemUnderTest& system,
                    const std::vector<std::shared_ptr<const Judge>>& judges, const Dataset& dataset,
                    const PrincipalBook& principals, const EvalOptions& options) {
  if (corpus.empty()) throw CorpusError("corpus is empty");
  check_corpus(corpus, dataset, principals);

  auto run_case = [&](const UseCase& u) {
    const Principal p = principal_for(principals, u.principal_ref, dataset.org);
    const CaseRun run = system(u, p);
    CaseResult c;
    c.id = u.id;
    c.intent_class = u.intent_class;
    c.executed = run.executed;
    c.status = std::string(status_name(run.status));
    c.clarifications = run.clarifications;
    c.query_attempts = run.query_attempts;
    const AnswerRecord reference = reference_answer(u, dataset.catalog);
    for (const auto& judge : judges) {
      if (!run.executed) {
        // Nothing executed, so there is no answer to be correct.
        c.verdicts[judge->name()] = JudgeVerdict{Verdict::Incorrect, std::string("no executed result")};
        continue;
      }
      try {
        c.verdicts[judge->name()] = judge->judge(u.query, reference, run.answer);
      } catch (const JudgeUnavailable&) {
        c.verdicts[judge->name()] = std::nullopt;
      }
    }
    return c;
  };

  std::vector<CaseResult> results(corpus.size());
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) results[i] = run_case(corpus[i]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next.fetch_add(1); i < corpus.size(); i = next.fetch_add(1)) results[i] = run_case(corpus[i]);
      }));
    }
    for (auto& w : workers) w.get();
  }
  std::vector<std::string> names;
  for (const auto& j : judges) names.push_back(j->name());
  return summarize(std::move(results), names);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json judges = nlohmann::json::object();
  for (const auto& [name, s] : r.judges) {
    judges[name] = {{"correct", s.correct}, {"judged", s.judged}, {"abstained", s.abstained}, {"accuracy", s.accuracy}};
  }
  nlohmann::json cases = nlohmann::json::array();
  for (const CaseResult& c : r.per_case) {
    nlohmann::json verdicts = nlohmann::json::object();
    for (const auto& [name, v] : c.verdicts) verdicts[name] = v ? to_json(*v) : nlohmann::json("abstain");
    cases.push_back({{"id", c.id},
                     {"intent_class", intent_class_name(c.intent_class)},
                     {"executed", c.executed},
                     {"status", c.status},
                     {"clarifications", c.clarifications},
                     {"query_attempts", c.query_attempts},
                     {"verdicts", std::move(verdicts)}});
  }
  return {{"n_cases", r.n_cases},
          {"executed_count", r.executed_count},
          {"exec_success_rate", r.exec_success_rate},
          {"e2e_accuracy", std::move(judges)},
          {"mean_accuracy", r.mean_accuracy},
          {"per_case", std::move(cases)}};
}

std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  out << "cases            " << r.n_cases << "\n";
  out << "executed         " << r.executed_count << "\n";
  out << "exec success     " << format_percent(r.exec_success_rate) << "%\n";
  for (const auto& [name, s] : r.judges) {
    out << "e2e[" << name << "]" << std::string(name.size() < 11 ? 11 - name.size() : 1, ' ')
        << format_percent(s.accuracy) << "%  (" << s.correct << "/" << s.judged;
    if (s.abstained) out << ", " << s.abstained << " abstained";
    out << ")\n";
  }
  out << "e2e mean         " << format_percent(r.mean_accuracy) << "%\n";
  for (const CaseResult& c : r.per_case) {
    out << "  " << c.id << "  " << (c.executed ? "exec" : "----") << "  " << c.status;
    for (const auto& [name, v] : c.verdicts) {
      out << "  " << name << "=" << (v ? std::string(verdict_name(v->verdict)) : "abstain");
      if (v && v->reason) out << " (" << *v->reason << ")";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace govq
