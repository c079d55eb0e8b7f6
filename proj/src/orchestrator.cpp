#include "govq/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <regex>
#include <set>

#include "govq/errors.hpp"
#include "govq/guardrails.hpp"
#include "govq/prompts.hpp"
#include "govq/util.hpp"

namespace govq {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Parse:
      return "Parse";
    case Stage::Targets:
      return "Targets";
    case Stage::Query:
      return "Query";
    case Stage::Viz:
      return "Viz";
    case Stage::Done:
      return "Done";
  }
  return "Parse";
}

std::string_view audit_event_name(AuditEvent e) {
  switch (e) {
    case AuditEvent::ok:
      return "ok";
    case AuditEvent::validation_error:
      return "validation_error";
    case AuditEvent::exec_error:
      return "exec_error";
    case AuditEvent::retry:
      return "retry";
    case AuditEvent::clarify:
      return "clarify";
    case AuditEvent::refuse:
      return "refuse";
    case AuditEvent::denied:
      return "denied";
  }
  return "ok";
}

std::string_view status_name(ResponseStatus s) {
  switch (s) {
    case ResponseStatus::answered:
      return "answered";
    case ResponseStatus::needs_clarification:
      return "needs_clarification";
    case ResponseStatus::refused:
      return "refused";
    case ResponseStatus::failed:
      return "failed";
  }
  return "failed";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::array<E, N>& all, std::string_view (*name)(E), const char* what) {
  for (E e : all) {
    if (name(e) == text) return e;
  }
  throw ParseError(std::string("unknown ") + what + ": " + std::string(text));
}

constexpr std::array<Stage, 5> kStages = {Stage::Parse, Stage::Targets, Stage::Query, Stage::Viz, Stage::Done};
constexpr std::array<AuditEvent, 7> kEvents = {AuditEvent::ok,      AuditEvent::validation_error, AuditEvent::exec_error,
                                               AuditEvent::retry,   AuditEvent::clarify,          AuditEvent::refuse,
                                               AuditEvent::denied};

nlohmann::json candidates_json(const std::vector<Candidate>& cs) {
  nlohmann::json out = nlohmann::json::array();
  for (const Candidate& c : cs) out.push_back({{"id", c.id}, {"name", c.name}, {"score", c.score}});
  return out;
}

std::vector<Candidate> candidates_from_json(const nlohmann::json& j) {
  std::vector<Candidate> out;
  for (const auto& c : j) out.push_back({c.at("id").get<std::string>(), c.at("name").get<std::string>(), c.at("score").get<double>()});
  return out;
}

}  // namespace

nlohmann::json to_json(const AuditEntry& e) {
  return {{"timestamp", e.timestamp}, {"stage", stage_name(e.stage)}, {"event", audit_event_name(e.event)}, {"detail", e.detail}};
}

AuditEntry audit_from_json(const nlohmann::json& j) {
  AuditEntry e;
  e.timestamp = j.at("timestamp").get<std::string>();
  e.stage = parse_enum(j.at("stage").get<std::string>(), kStages, stage_name, "stage");
  e.event = parse_enum(j.at("event").get<std::string>(), kEvents, audit_event_name, "audit event");
  e.detail = j.value("detail", std::string{});
  return e;
}

std::string audit_jsonl(const std::vector<AuditEntry>& entries) {
  std::string out;
  for (const AuditEntry& e : entries) out += to_json(e).dump() + "\n";
  return out;
}

nlohmann::json to_json(const AgentResponse& r) {
  nlohmann::json j = {{"status", status_name(r.status)},
                      {"text", r.text},
                      {"table", nullptr},
                      {"chart", nullptr},
                      {"clarification", nullptr}};
  if (r.table) j["table"] = to_json(*r.table);
  if (r.chart) j["chart"] = to_json(*r.chart);
  if (r.clarification) {
    j["clarification"] = {{"question", r.clarification->question},
                          {"candidates", candidates_json(r.clarification->candidates)}};
  }
  return j;
}

nlohmann::json to_json(const SessionState& s) {
  nlohmann::json audit = nlohmann::json::array();
  for (const AuditEntry& e : s.audit) audit.push_back(to_json(e));
  nlohmann::json j = {{"session_id", s.session_id},
                      {"principal", to_json(s.principal)},
                      {"resolved_targets", s.resolved_targets},
                      {"time_window", nullptr},
                      {"turn_history", s.turn_history},
                      {"clarification_count_this_flow", s.clarification_count_this_flow},
                      {"audit", std::move(audit)},
                      {"pending", nullptr},
                      {"last_frame", nullptr},
                      {"pseudonyms", s.pseudonyms.to_json()},
                      {"last_active", dates::format_timestamp(s.last_active)}};
  if (s.time_window) j["time_window"] = dates::to_json(*s.time_window);
  if (s.last_frame) j["last_frame"] = to_json(*s.last_frame);
  if (s.pending) {
    j["pending"] = {{"utterance", s.pending->utterance},
                    {"frame", to_json(s.pending->frame)},
                    {"range", dates::to_json(s.pending->range)},
                    {"resolved", s.pending->resolved},
                    {"remaining_phrases", s.pending->remaining_phrases},
                    {"candidates", candidates_json(s.pending->candidates)}};
  }
  return j;
}

SessionState session_from_json(const nlohmann::json& j) {
  try {
    SessionState s;
    s.session_id = j.at("session_id").get<std::string>();
    s.principal = principal_from_json(j.at("principal"));
    s.resolved_targets = j.value("resolved_targets", std::vector<std::string>{});
    if (!j.at("time_window").is_null()) s.time_window = dates::date_range_from_json(j["time_window"]);
    for (const auto& t : j.value("turn_history", nlohmann::json::array())) s.turn_history.push_back(t);
    s.clarification_count_this_flow = j.value("clarification_count_this_flow", 0);
    for (const auto& e : j.value("audit", nlohmann::json::array())) s.audit.push_back(audit_from_json(e));
    if (j.contains("pending") && !j["pending"].is_null()) {
      const auto& p = j["pending"];
      PendingClarification pc;
      pc.utterance = p.at("utterance").get<std::string>();
      pc.frame = intent_from_json(p.at("frame"));
      pc.range = dates::date_range_from_json(p.at("range"));
      pc.resolved = p.at("resolved").get<std::vector<std::string>>();
      pc.remaining_phrases = p.at("remaining_phrases").get<std::vector<std::string>>();
      pc.candidates = candidates_from_json(p.at("candidates"));
      s.pending = std::move(pc);
    }
    if (j.contains("last_frame") && !j["last_frame"].is_null()) s.last_frame = intent_from_json(j["last_frame"]);
    s.pseudonyms = PseudonymTable::from_json(j.value("pseudonyms", nlohmann::json::object()));
    if (auto t = dates::parse_timestamp(j.value("last_active", std::string{}))) s.last_active = *t;
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed session: ") + e.what());
  }
}

SessionState new_session(std::string session_id, Principal principal) {
  SessionState s;
  s.session_id = std::move(session_id);
  s.principal = std::move(principal);
  return s;
}

// ---- tier-1 fixes ----

std::optional<std::string> apply_tier1_fix(AnalyticsRequest& request, const ValidationError& error,
                                           const Catalog& catalog) {
  if (error.kind == ValidationErrorKind::BadDateRange) {
    const auto start = dates::parse_date(util::trim(request.start_date));
    const auto end = dates::parse_date(util::trim(request.end_date));
    if (!start || !end) return std::nullopt;
    const auto s = std::chrono::sys_days{*start};
    const auto e = std::chrono::sys_days{*end};
    if (e < s) {
      std::swap(request.start_date, request.end_date);
      return "swapped reversed date range";
    }
    if (e == s) {
      request.end_date = dates::format_date(dates::CivilDate{s + std::chrono::days{1}});
      return "widened empty range to one day";
    }
    return std::nullopt;
  }
  if (error.kind == ValidationErrorKind::DanglingOrderBy) {
    std::set<std::string> aliases;
    for (const std::string& raw : request.select) {
      auto parsed = parse_select(raw, catalog);
      if (const auto* s = std::get_if<SelectExpr>(&parsed)) aliases.insert(s->output_alias);
    }
    const std::size_t before = request.order_by.size();
    std::erase_if(request.order_by, [&aliases](const OrderBy& o) { return !aliases.count(o.alias); });
    if (request.order_by.size() == before) return std::nullopt;
    return "dropped order_by entries without a matching select alias";
  }
  return std::nullopt;
}

// ---- summaries ----

namespace {

std::string display_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string display_cell(const Cell& c, bool masked) {
  if (const double* d = as_number(c)) return display_number(*d);
  if (const std::string* s = as_string(c)) return *s;
  return masked ? "masked" : "no data";
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace

std::string window_label(const dates::DateRange& range) {
  const auto last = dates::CivilDate{std::chrono::sys_days{range.end} - std::chrono::days{1}};
  if (last == range.start) return dates::format_date(range.start);
  return dates::format_date(range.start) + " to " + dates::format_date(last);
}

std::string synthesize_response(const TabularResult& result, const IntentFrame& frame, const SummaryContext& context) {
  (void)frame;
  const std::string head = capitalize(context.metric_label) + " for " + context.scope + ", " + context.window;
  if (result.provenance.endpoint == "records") {
    std::string out = "Found " + std::to_string(result.rows.size()) + " records for " + context.scope + ", " +
                      context.window + ".";
    if (result.truncated) out += " Showing the most recent " + std::to_string(result.rows.size()) + " only.";
    return out;
  }
  if (result.rows.empty()) return "No data for " + context.metric_label + " for " + context.scope + ", " + context.window + ".";

  std::optional<std::size_t> value_col;
  std::optional<std::size_t> label_col;
  for (std::size_t i = 0; i < result.schema.size(); ++i) {
    const Column& c = result.schema[i];
    if (c.source == "key(target_id)") continue;
    if (!value_col && is_numeric(c.type) && !c.temporal) value_col = i;
    if (!label_col && (c.temporal || c.type == ValueType::string)) label_col = i;
  }
  if (!value_col) return head + ": " + std::to_string(result.rows.size()) + " rows.";
  const bool masked = result.masked_columns.count(result.schema[*value_col].name) > 0;

  if (result.rows.size() == 1 && !label_col) {
    return head + ": " + display_cell(result.rows[0][*value_col], masked) + ".";
  }

  std::optional<std::size_t> hi;
  std::optional<std::size_t> lo;
  for (std::size_t r = 0; r < result.rows.size(); ++r) {
    const double* v = as_number(result.rows[r][*value_col]);
    if (!v) continue;
    if (!hi || *v > *as_number(result.rows[*hi][*value_col])) hi = r;
    if (!lo || *v < *as_number(result.rows[*lo][*value_col])) lo = r;
  }
  auto label_of = [&](std::size_t r) {
    if (!label_col) return std::string("row ") + std::to_string(r + 1);
    std::string out;
    for (std::size_t i = 0; i < result.schema.size(); ++i) {
      const Column& c = result.schema[i];
      if (c.source == "key(target_id)" || is_numeric(c.type)) continue;
      if (!out.empty()) out += " / ";
      const Cell& cell = result.rows[r][i];
      out += is_null(cell) ? std::string("none") : display_cell(cell, false);
    }
    return out;
  };
  const std::string n = std::to_string(result.rows.size());
  if (!hi) return head + ": no values across " + n + " rows" + (masked ? " (masked)." : ".");
  if (result.provenance.endpoint == "leaderboard") {
    return head + ": " + label_of(*hi) + " ranks first with " + display_cell(result.rows[*hi][*value_col], false) +
           " among " + n + " targets.";
  }
  const bool temporal = label_col && result.schema[*label_col].temporal;
  const std::string unit = temporal ? " " + result.schema[*label_col].name + " buckets" : " groups";
  if (*as_number(result.rows[*hi][*value_col]) == *as_number(result.rows[*lo][*value_col])) {
    return head + ", across " + n + unit + ": every value is " + display_cell(result.rows[*hi][*value_col], false) + ".";
  }
  return head + ", across " + n + unit + ": highest " + display_cell(result.rows[*hi][*value_col], false) + " (" +
         label_of(*hi) + "), lowest " + display_cell(result.rows[*lo][*value_col], false) + " (" + label_of(*lo) + ").";
}

// ---- orchestrator ----

Orchestrator::Orchestrator(OrchestratorDeps deps) : deps_(std::move(deps)) {
  if (!deps_.dataset) throw ConfigError("orchestrator needs a dataset source");
  if (!deps_.planner) throw ConfigError("orchestrator needs a planner backend");
  if (!deps_.clock) deps_.clock = [] { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); };
  if (!deps_.field_context) deps_.field_context = [](const Dataset& d) { return render_field_context(d.catalog); };
  if (!dates::valid_timezone(deps_.timezone)) throw ConfigError("unknown timezone " + deps_.timezone);
}

void Orchestrator::audit(SessionState& s, Stage stage, AuditEvent event, std::string detail) const {
  s.audit.push_back({dates::format_timestamp(deps_.clock()), stage, event, std::move(detail)});
}

QueryOutcome Orchestrator::run_query_stage(SessionState& session, const IntentFrame& frame,
                                           const std::vector<std::string>& targets, const dates::DateRange& range,
                                           std::string_view utterance) const {
  const auto ds = deps_.dataset();
  QueryOutcome out;
  DraftContext ctx;
  ctx.utterance = std::string(utterance);
  ctx.frame = frame;
  ctx.catalog = &ds->catalog;
  ctx.field_context = deps_.field_context(*ds);
  ctx.range = range;
  ctx.targets = targets;

  for (int attempt = 1; attempt <= kMaxQueryAttempts; ++attempt) {
    out.attempts = attempt;
    ctx.attempt = attempt;
    if (attempt > 1) audit(session, Stage::Query, AuditEvent::retry, "tier-2 redraft, attempt " + std::to_string(attempt));

    AnalyticsRequest req;
    try {
      req = deps_.planner->draft_request(ctx);
    } catch (const Error& e) {
      out.last_error = std::string("draft failed: ") + e.what();
      audit(session, Stage::Query, AuditEvent::exec_error, "draft failed");
      ctx.previous_error = out.last_error;
      continue;
    }

    ValidationResult v = validate(req, ds->catalog);
    for (int fixes = 0; fixes < 3 && std::holds_alternative<ValidationError>(v); ++fixes) {
      const auto& err = std::get<ValidationError>(v);
      audit(session, Stage::Query, AuditEvent::validation_error, std::string(validation_kind_name(err.kind)));
      if (!err.recoverable()) break;
      auto fix = apply_tier1_fix(req, err, ds->catalog);
      if (!fix) break;
      audit(session, Stage::Query, AuditEvent::ok, "tier-1 fix: " + *fix);
      v = validate(req, ds->catalog);
    }
    if (const auto* err = std::get_if<ValidationError>(&v)) {
      out.last_error = err->message();
      ctx.previous_error = out.last_error;
      continue;
    }

    const auto& vr = std::get<ValidatedRequest>(v);
    try {
      TabularResult table = execute(vr, session.principal, *ds, deps_.execute);
      audit(session, Stage::Query, AuditEvent::ok,
            "executed " + std::string(endpoint_name(vr.endpoint)) + " request " + vr.request_id());
      out.table = std::move(table);
      out.request = vr;
      return out;
    } catch (const PermissionError&) {
      audit(session, Stage::Query, AuditEvent::denied, "request names a target outside the permitted scope");
      out.permission_denied = true;
      out.last_error = "permission denied";
      return out;
    } catch (const Error& e) {
      audit(session, Stage::Query, AuditEvent::exec_error, "execution failed");
      out.last_error = std::string("execution failed: ") + e.what();
      ctx.previous_error = out.last_error;
    }
  }
  return out;
}

namespace {

const char* const kNoTargetText = "I couldn't find a team, group or office with that name among the ones you can access.";
const char* const kUninterpretableText =
    "I couldn't tell which metric you're asking about. Try naming one, for example handled calls or deflection rate.";

std::optional<std::size_t> pick_candidate(std::string_view utterance, const std::vector<Candidate>& candidates) {
  static const std::regex kIndex(R"(^\s*(?:#|option\s+|number\s+)?(\d{1,2})\s*[.)]?\s*$)", std::regex::icase);
  const std::string text(utterance);
  std::smatch m;
  if (std::regex_match(text, m, kIndex)) {
    const std::size_t i = std::stoul(m[1]);
    if (i >= 1 && i <= candidates.size()) return i - 1;
    return std::nullopt;
  }
  const std::string wanted = util::normalize_space(text);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (util::normalize_space(candidates[i].name) == wanted) return i;
  }
  return std::nullopt;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (const std::string& s : v) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

}  // namespace

TurnResult Orchestrator::handle_turn(SessionState session, std::string_view utterance) const {
  TurnResult tr;
  auto finish = [&](AgentResponse resp) {
    session.last_active = deps_.clock();
    session.turn_history.push_back({{"utterance", std::string(utterance)}, {"status", status_name(resp.status)}});
    tr.state = std::move(session);
    tr.response = std::move(resp);
    return std::move(tr);
  };
  auto failed = [&](std::string text) {
    AgentResponse r;
    r.status = ResponseStatus::failed;
    r.text = std::move(text);
    return r;
  };

  try {
    const auto ds = deps_.dataset();
    const Catalog& catalog = ds->catalog;
    const OrgIndex& org = ds->org;
    const dates::Instant now = deps_.clock();

    const GuardrailDecision guard = apply_guardrails(utterance);
    if (guard.refused) {
      session.pending.reset();
      session.clarification_count_this_flow = 0;
      audit(session, Stage::Parse, AuditEvent::refuse, "guardrail " + guard.rule);
      AgentResponse r;
      r.status = ResponseStatus::refused;
      r.text = std::string(kRefusalText);
      return finish(std::move(r));
    }

    IntentFrame frame;
    dates::DateRange range;
    std::vector<std::string> targets;
    std::vector<std::string> phrases;
    std::string flow_utterance(utterance);
    bool continuing = false;

    if (session.pending) {
      PendingClarification pending = *session.pending;
      session.pending.reset();
      if (auto pick = pick_candidate(utterance, pending.candidates)) {
        const Candidate& c = pending.candidates[*pick];
        if (!check_permission(session.principal, c.id, org)) {
          audit(session, Stage::Targets, AuditEvent::denied, "clarification pick outside permitted scope");
          return finish(failed(kNoTargetText));
        }
        audit(session, Stage::Targets, AuditEvent::ok, "clarification answered: " + c.id + "; permission checked");
        continuing = true;
        frame = pending.frame;
        range = pending.range;
        targets = pending.resolved;
        targets.push_back(c.id);
        phrases = pending.remaining_phrases;
        flow_utterance = pending.utterance;
      }
    }

    if (!continuing) {
      session.clarification_count_this_flow = 0;
      const dates::CivilDate today = dates::local_date(now, deps_.timezone);
      try {
        frame = deps_.planner->parse_intent(utterance, catalog, SessionHint{today, session.last_frame});
      } catch (const UninterpretableIntent&) {
        audit(session, Stage::Parse, AuditEvent::validation_error, "uninterpretable intent");
        return finish(failed(kUninterpretableText));
      } catch (const Error&) {
        audit(session, Stage::Parse, AuditEvent::exec_error, "intent parsing failed");
        return finish(failed(kUninterpretableText));
      }
      if (frame.knowledge_query) {
        audit(session, Stage::Parse, AuditEvent::ok, "knowledge_base_search stub");
        audit(session, Stage::Done, AuditEvent::ok, "knowledge_base_search not configured");
        return finish(failed("Documentation search is not configured for this deployment."));
      }
      try {
        if (frame.date_expr) {
          range = dates::resolve(*frame.date_expr, now, deps_.timezone);
        } else if (session.time_window) {
          range = *session.time_window;
        } else {
          range = dates::resolve(dates::TrailingWindow{30, dates::WindowUnit::days}, now, deps_.timezone);
        }
      } catch (const InvalidExpr&) {
        audit(session, Stage::Parse, AuditEvent::validation_error, "date expression could not be resolved");
        return finish(failed("I couldn't work out that time window. Try a phrase like \"last month\" or \"Q1 2025\"."));
      }
      std::string metrics = frame.metrics.empty() ? "default" : join(frame.metrics, ",");
      audit(session, Stage::Parse, AuditEvent::ok,
            "metrics=" + metrics + " window=" + dates::format_date(range.start) + "/" + dates::format_date(range.end));
      phrases = frame.target_phrases;
      if (phrases.empty() && !session.resolved_targets.empty()) {
        for (const std::string& id : session.resolved_targets) {
          if (!check_permission(session.principal, id, org)) {
            audit(session, Stage::Targets, AuditEvent::denied, "reused target no longer permitted");
            AgentResponse r;
            r.status = ResponseStatus::refused;
            r.text = std::string(kRefusalText);
            return finish(std::move(r));
          }
        }
        targets = session.resolved_targets;
        audit(session, Stage::Targets, AuditEvent::ok, "reused targets " + join(targets, ",") + "; permission checked");
      }
    }

    // Targets
    for (std::size_t i = 0; i < phrases.size(); ++i) {
      const std::string& phrase = phrases[i];
      const ResolutionOutcome outcome = resolve_targets(phrase, org, session.principal);
      if (const auto* r = std::get_if<Resolved>(&outcome)) {
        for (const std::string& id : r->ids) {
          if (!check_permission(session.principal, id, org)) {
            audit(session, Stage::Targets, AuditEvent::denied, "resolved target outside permitted scope");
            return finish(failed(kNoTargetText));
          }
          targets.push_back(id);
        }
        audit(session, Stage::Targets, AuditEvent::ok, "resolved " + join(r->ids, ",") + "; permission checked");
      } else if (const auto* a = std::get_if<Ambiguous>(&outcome)) {
        if (session.clarification_count_this_flow >= kClarificationBudget) {
          audit(session, Stage::Targets, AuditEvent::exec_error, "still ambiguous after clarification");
          return finish(failed("That still matches several targets. Please ask again using the exact team or group name."));
        }
        session.clarification_count_this_flow += 1;
        PendingClarification pc;
        pc.utterance = flow_utterance;
        pc.frame = frame;
        pc.range = range;
        pc.resolved = targets;
        pc.remaining_phrases.assign(phrases.begin() + static_cast<std::ptrdiff_t>(i) + 1, phrases.end());
        pc.candidates = a->candidates;
        session.pending = pc;
        audit(session, Stage::Targets, AuditEvent::clarify, std::to_string(a->candidates.size()) + " candidates");
        AgentResponse resp;
        resp.status = ResponseStatus::needs_clarification;
        resp.text = "\"" + phrase + "\" matches more than one target. Which one did you mean?";
        resp.clarification = Clarification{resp.text, a->candidates};
        return finish(std::move(resp));
      } else if (std::holds_alternative<Denied>(outcome)) {
        audit(session, Stage::Targets, AuditEvent::denied, "phrase names a target outside permitted scope");
        return finish(failed(kNoTargetText));
      } else {
        audit(session, Stage::Targets, AuditEvent::exec_error, "no matching target");
        return finish(failed(kNoTargetText));
      }
    }
    targets = sorted_unique(targets);
    if (targets.empty()) audit(session, Stage::Targets, AuditEvent::ok, "no-target metric");
    if (!phrases.empty() || continuing) session.resolved_targets = targets;

    std::vector<std::string> query_targets = targets;
    if (frame.ranking && !targets.empty()) {
      std::vector<std::string> expanded;
      for (const std::string& t : targets) {
        const auto& kids = org.children(t);
        if (kids.empty()) {
          expanded.push_back(t);
          continue;
        }
        for (const std::string& k : kids) {
          if (session.principal.permits(k)) expanded.push_back(k);
        }
      }
      query_targets = sorted_unique(expanded);
    }

    // Query
    QueryOutcome q = run_query_stage(session, frame, query_targets, range, flow_utterance);
    tr.query_attempts = q.attempts;
    if (q.permission_denied) {
      AgentResponse r;
      r.status = ResponseStatus::refused;
      r.text = std::string(kRefusalText);
      return finish(std::move(r));
    }
    if (!q.table) {
      audit(session, Stage::Query, AuditEvent::exec_error, "no valid result after " + std::to_string(q.attempts) + " attempts");
      return finish(failed(
          "I couldn't get a valid result after two attempts. Would you like to try a different approach, for example "
          "another metric, target or time window?"));
    }
    tr.executed_request = q.request;
    session.time_window = range;
    session.last_frame = frame;

    // Viz
    std::vector<std::string> names;
    for (const std::string& id : targets) {
      if (const OrgNode* n = org.find(id)) names.push_back(n->name);
    }
    const auto* lex_backend = dynamic_cast<const RuleBackend*>(deps_.planner.get());
    std::string label;
    if (frame.metrics.empty()) {
      label = frame.list_records ? "records" : "interactions";
    } else if (lex_backend) {
      label = lex_backend->lexicon().label(frame.metrics.front());
    } else {
      label = frame.metrics.front();
    }
    SummaryContext sc{label, names.empty() ? std::string("all targets you can access") : join(names, ", "),
                      window_label(range)};

    AgentResponse resp;
    resp.status = ResponseStatus::answered;
    resp.table = *q.table;
    const ChartDecision decision = select_chart_type(*q.table, frame.wants_viz);
    if (const auto* d = std::get_if<Decline>(&decision)) {
      audit(session, Stage::Viz, AuditEvent::ok, "declined: " + d->reason);
    } else {
      const ChartType type = std::get<ChartType>(decision);
      try {
        ChartConfig cfg = deps_.planner->draft_chart(*q.table, type, ChartContext{label, sc.scope, sc.window});
        cfg = apply_chart_masking(std::move(cfg), *q.table, session.pseudonyms);
        if (channels_sound(cfg)) {
          audit(session, Stage::Viz, AuditEvent::ok, "chart " + std::string(chart_type_name(type)));
          resp.chart = std::move(cfg);
        } else {
          audit(session, Stage::Viz, AuditEvent::exec_error, "chart failed channel check");
        }
      } catch (const ChannelError&) {
        audit(session, Stage::Viz, AuditEvent::exec_error, "no usable channel");
      }
    }

    resp.text = synthesize_response(*q.table, frame, sc);
    const std::string outbound = resp.text + (resp.chart ? to_json(*resp.chart).dump() : std::string());
    if (!outbound_clean(outbound)) {
      audit(session, Stage::Done, AuditEvent::refuse, "outbound sentinel detected");
      AgentResponse r;
      r.status = ResponseStatus::refused;
      r.text = std::string(kRefusalText);
      tr.executed_request.reset();
      return finish(std::move(r));
    }
    audit(session, Stage::Done, AuditEvent::ok, "answered");
    return finish(std::move(resp));
  } catch (const std::exception&) {
    audit(session, Stage::Done, AuditEvent::exec_error, "internal error");
    return finish(failed("Something went wrong while answering. Please try again."));
  }
}

// ---- session storage ----

std::optional<SessionState> InMemorySessionStore::load(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

void InMemorySessionStore::save(const SessionState& state) {
  std::lock_guard lock(mu_);
  sessions_[state.session_id] = state;
}

void InMemorySessionStore::erase(const std::string& id) {
  std::lock_guard lock(mu_);
  sessions_.erase(id);
}

std::vector<std::string> InMemorySessionStore::ids() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

FileSessionStore::FileSessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path FileSessionStore::file_for(const std::string& id) const {
  if (!valid_session_id(id)) throw Error("invalid session id");
  return dir_ / (id + ".json");
}

std::optional<SessionState> FileSessionStore::load(const std::string& id) {
  std::lock_guard lock(mu_);
  const auto path = file_for(id);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return session_from_json(nlohmann::json::parse(ss.str()));
}

void FileSessionStore::save(const SessionState& state) {
  std::lock_guard lock(mu_);
  const auto path = file_for(state.session_id);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << to_json(state).dump();
  }
  std::filesystem::rename(tmp, path);
}

void FileSessionStore::erase(const std::string& id) {
  std::lock_guard lock(mu_);
  std::filesystem::remove(file_for(id));
}

std::vector<std::string> FileSessionStore::ids() {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (entry.path().extension() == ".json") out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool valid_session_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

SessionManager::SessionManager(std::shared_ptr<SessionStore> store, std::chrono::seconds ttl,
                               std::function<dates::Instant()> clock)
    : store_(std::move(store)), ttl_(ttl), clock_(std::move(clock)) {
  if (!clock_) clock_ = [] { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); };
}

std::shared_ptr<std::mutex> SessionManager::lock_for(const std::string& id) {
  std::lock_guard lock(locks_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

TurnResult SessionManager::run_turn(const Orchestrator& orchestrator, const std::string& session_id,
                                    const Principal& principal, std::string_view utterance) {
  if (!valid_session_id(session_id)) throw Error("invalid session id");
  auto m = lock_for(session_id);
  std::lock_guard turn_lock(*m);
  std::optional<SessionState> state = store_->load(session_id);
  if (state && clock_() - state->last_active > ttl_) {
    store_->erase(session_id);
    state.reset();
  }
  if (state && (state->principal.user_id != principal.user_id || state->principal.tenant_id != principal.tenant_id)) {
    throw PermissionError("session belongs to another user");
  }
  SessionState s = state ? std::move(*state) : new_session(session_id, principal);
  s.principal = principal;
  TurnResult result = orchestrator.handle_turn(std::move(s), utterance);
  store_->save(result.state);
  return result;
}

std::optional<SessionState> SessionManager::get(const std::string& session_id) {
  if (!valid_session_id(session_id)) return std::nullopt;
  auto m = lock_for(session_id);
  std::lock_guard turn_lock(*m);
  return store_->load(session_id);
}

void SessionManager::record_audit(const std::string& session_id, const Principal& principal, AuditEntry entry) {
  if (!valid_session_id(session_id)) throw Error("invalid session id");
  auto m = lock_for(session_id);
  std::lock_guard turn_lock(*m);
  std::optional<SessionState> state = store_->load(session_id);
  if (state && (state->principal.user_id != principal.user_id || state->principal.tenant_id != principal.tenant_id)) {
    throw PermissionError("session belongs to another user");
  }
  SessionState s = state ? std::move(*state) : new_session(session_id, principal);
  s.audit.push_back(std::move(entry));
  s.last_active = clock_();
  store_->save(s);
}

std::size_t SessionManager::evict_idle() {
  std::size_t dropped = 0;
  for (const std::string& id : store_->ids()) {
    auto m = lock_for(id);
    std::lock_guard turn_lock(*m);
    auto s = store_->load(id);
    if (s && clock_() - s->last_active > ttl_) {
      store_->erase(id);
      ++dropped;
    }
  }
  return dropped;
}

}  // namespace govq
