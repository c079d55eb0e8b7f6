#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "govq/errors.hpp"
#include "govq/planner.hpp"
#include "govq/util.hpp"

namespace govq {

const MetricEntry* Lexicon::find(std::string_view metric) const {
  for (const MetricEntry& m : metrics) {
    if (m.metric == metric) return &m;
  }
  return nullptr;
}

std::string Lexicon::label(std::string_view metric) const {
  if (const MetricEntry* m = find(metric)) return m->label;
  return std::string(metric);
}

namespace {

std::vector<std::pair<std::string, std::string>> phrase_map(const nlohmann::json& j, const char* key) {
  std::vector<std::pair<std::string, std::string>> out;
  if (!j.contains(key)) return out;
  for (const auto& [phrase, value] : j.at(key).items()) out.emplace_back(util::to_lower(phrase), value.get<std::string>());
  return out;
}

}  // namespace

Lexicon Lexicon::from_json(const nlohmann::json& j) {
  try {
    Lexicon lex;
    for (const auto& m : j.at("metrics")) {
      MetricEntry e;
      e.metric = m.at("metric").get<std::string>();
      e.select = m.at("select").get<std::string>();
      e.label = m.value("label", e.metric);
      for (const auto& p : m.at("phrases")) e.phrases.push_back(util::to_lower(p.get<std::string>()));
      e.accepts_kind_filter = m.value("accepts_kind_filter", false);
      lex.metrics.push_back(std::move(e));
    }
    lex.kinds = phrase_map(j, "kinds");
    lex.grains = phrase_map(j, "grains");
    lex.dimensions = phrase_map(j, "dimensions");
    lex.charts = phrase_map(j, "charts");
    lex.ranking_words = j.value("ranking_words", std::vector<std::string>{});
    lex.record_words = j.value("record_words", std::vector<std::string>{});
    lex.knowledge_patterns = j.value("knowledge_patterns", std::vector<std::string>{});
    lex.record_columns = j.value("record_columns", std::vector<std::string>{"col:record_id", "col:occurred_at"});
    lex.default_select = j.value("default_select", lex.default_select);
    for (const std::string& p : lex.knowledge_patterns) {
      try {
        std::regex check(p);
      } catch (const std::regex_error&) {
        throw ParseError("lexicon: invalid knowledge pattern '" + p + "'");
      }
    }
    return lex;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed lexicon: ") + e.what());
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(nlohmann::json::parse(ss.str()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("lexicon " + path.string() + ": " + e.what(), e.byte);
  }
}

namespace {

constexpr char kMask = '|';

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Whole-word occurrences of `phrase` in `text`.
std::vector<std::size_t> find_word(const std::string& text, const std::string& phrase) {
  std::vector<std::size_t> out;
  if (phrase.empty()) return out;
  for (std::size_t pos = text.find(phrase); pos != std::string::npos; pos = text.find(phrase, pos + 1)) {
    const bool left = pos == 0 || !word_char(text[pos - 1]);
    const std::size_t end = pos + phrase.size();
    const bool right = end >= text.size() || !word_char(text[end]);
    if (left && right) out.push_back(pos);
  }
  return out;
}

struct Masked {
  std::string text;
  std::string low;

  void mask(std::size_t pos, std::size_t len) {
    for (std::size_t i = pos; i < pos + len && i < text.size(); ++i) {
      text[i] = kMask;
      low[i] = kMask;
    }
  }
};

template <typename Value>
struct Hit {
  std::size_t pos;
  Value value;
};

// Longest phrases first; each hit masks its span so shorter phrases cannot reuse it.
template <typename Value>
std::vector<Hit<Value>> take_phrases(Masked& m, std::vector<std::pair<std::string, Value>> table) {
  std::stable_sort(table.begin(), table.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  std::vector<Hit<Value>> hits;
  for (const auto& [phrase, value] : table) {
    for (std::size_t pos : find_word(m.low, phrase)) {
      if (m.low.compare(pos, phrase.size(), phrase) != 0) continue;
      hits.push_back({pos, value});
      m.mask(pos, phrase.size());
    }
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.pos < b.pos; });
  return hits;
}

const std::set<std::string> kTriggers = {"for", "at", "in", "about"};
const std::set<std::string> kBoundaries = {
    "for",  "at",    "in",      "on",    "by",   "from", "to",        "over", "during", "with",  "since",
    "last", "this",  "past",    "previous", "broken", "break", "each", "per", "yesterday", "today", "showing",
    "compared", "vs", "versus", "who", "that", "which", "where", "when", "what", "how", "is", "was", "were",
    "are", "did", "do", "does", "has", "have", "had", "please", "as", "into", "between"};
const std::set<std::string> kJoiners = {"and", "or", "&"};
const std::set<std::string> kKindNouns = {"team", "teams", "group", "groups", "office", "department", "center", "centre"};

struct Token {
  std::size_t pos;
  std::size_t len;
  std::string word;  // empty for punctuation and masked spans
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (word_char(c) || c == '&') {
      std::size_t j = i;
      while (j < text.size() && (word_char(text[j]) || text[j] == '\'' || text[j] == '-' || text[j] == '&')) ++j;
      while (j > i + 1 && (text[j - 1] == '\'' || text[j - 1] == '-')) --j;
      out.push_back({i, j - i, text.substr(i, j - i)});
      i = j;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else {
      std::size_t j = i + 1;
      if (c == kMask) {
        while (j < text.size() && text[j] == kMask) ++j;
      }
      out.push_back({i, j - i, ""});
      i = j;
    }
  }
  return out;
}

bool capitalized(const std::string& w) { return !w.empty() && std::isupper(static_cast<unsigned char>(w[0])); }

struct Span {
  std::size_t pos;
  std::size_t len;
};

std::vector<Span> target_spans(const std::string& text) {
  const auto tokens = tokenize(text);
  std::vector<Span> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!kTriggers.count(util::to_lower(tokens[i].word))) continue;
    std::size_t j = i + 1;
    if (j < tokens.size() && util::to_lower(tokens[j].word) == "the") ++j;
    std::vector<std::size_t> part;
    auto flush = [&]() {
      bool has_cap = false;
      for (std::size_t k : part) has_cap = has_cap || capitalized(tokens[k].word);
      if (has_cap) {
        const Token& a = tokens[part.front()];
        const Token& b = tokens[part.back()];
        out.push_back({a.pos, b.pos + b.len - a.pos});
      }
      part.clear();
    };
    for (; j < tokens.size(); ++j) {
      const std::string lw = util::to_lower(tokens[j].word);
      if (tokens[j].word.empty() || kBoundaries.count(lw)) break;
      if (kJoiners.count(lw)) {
        flush();
        continue;
      }
      if (part.empty() && lw == "the") continue;
      part.push_back(j);
    }
    flush();
    i = j > i ? j - 1 : i;
  }
  // "did the Sales group handle": capitalized words ending in a kind noun.
  // The sentence-initial word is never part of such a name.
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (!kKindNouns.count(util::to_lower(tokens[i].word))) continue;
    const bool covered = std::any_of(out.begin(), out.end(), [&](const Span& s) {
      return tokens[i].pos >= s.pos && tokens[i].pos < s.pos + s.len;
    });
    if (covered) continue;
    std::size_t k = i;
    while (k > 1 && capitalized(tokens[k - 1].word) && !kBoundaries.count(util::to_lower(tokens[k - 1].word))) --k;
    if (k == i) continue;
    out.push_back({tokens[k].pos, tokens[i].pos + tokens[i].len - tokens[k].pos});
  }
  std::sort(out.begin(), out.end(), [](const Span& a, const Span& b) { return a.pos < b.pos; });
  return out;
}

std::vector<FilterClause> quoted_filters(Masked& m) {
  static const std::regex kQuoted(R"((^|[\s(])(['"]|\xE2\x80\x98|\xE2\x80\x9C)([A-Za-z0-9][^'"\n]{0,60}?)(['"]|\xE2\x80\x99|\xE2\x80\x9D)(?=$|[\s,.?!;:)]))");
  std::vector<FilterClause> out;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::vector<Cell> values;
  const std::string text = m.text;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kQuoted); it != std::sregex_iterator(); ++it) {
    const auto& match = *it;
    values.emplace_back(match[3].str());
    const std::size_t start = static_cast<std::size_t>(match.position(2));
    spans.emplace_back(start, static_cast<std::size_t>(match.position(4) + match.length(4)) - start);
  }
  if (values.empty()) return out;
  std::string field;
  if (!find_word(m.low, "disposition").empty() || !find_word(m.low, "dispositions").empty()) {
    field = "disposition";
  } else if (!find_word(m.low, "channel").empty()) {
    field = "channel";
  }
  if (field.empty()) return out;
  for (const auto& [pos, len] : spans) m.mask(pos, len);
  out.push_back({field, FilterOp::in, values});
  return out;
}

bool has_word(const std::string& low, const std::string& w) { return !find_word(low, util::to_lower(w)).empty(); }

}  // namespace

IntentFrame RuleBackend::parse_intent(std::string_view utterance, const Catalog& catalog, const SessionHint& hint) const {
  (void)catalog;
  Masked m{std::string(utterance), util::to_lower(utterance)};
  IntentFrame f;

  for (const std::string& p : lex_.knowledge_patterns) {
    if (std::regex_search(m.low, std::regex(p))) {
      f.knowledge_query = true;
      break;
    }
  }

  const auto date_hits = find_date_phrases(m.low, hint.today);
  if (!date_hits.empty()) {
    f.date_expr = date_hits.front().expr;
    if (date_hits.size() > 1) f.ambiguity_note = "several date phrases; the first one was used";
  }
  for (const DatePhrase& d : date_hits) m.mask(d.pos, d.len);

  f.filters = quoted_filters(m);

  for (const Span& s : target_spans(m.text)) {
    f.target_phrases.push_back(std::string(utterance.substr(s.pos, s.len)));
    m.mask(s.pos, s.len);
  }

  std::vector<std::pair<std::string, const MetricEntry*>> metric_table;
  for (const MetricEntry& e : lex_.metrics) {
    for (const std::string& p : e.phrases) metric_table.emplace_back(p, &e);
  }
  bool kind_filterable = false;
  for (const auto& hit : take_phrases(m, metric_table)) {
    if (std::find(f.metrics.begin(), f.metrics.end(), hit.value->metric) == f.metrics.end()) {
      f.metrics.push_back(hit.value->metric);
      kind_filterable = kind_filterable || hit.value->accepts_kind_filter;
    }
  }

  if (auto charts = take_phrases(m, lex_.charts); !charts.empty()) f.wants_viz = parse_chart_type(charts.front().value);

  std::vector<std::pair<std::string, GroupByKey>> breakdown_table;
  for (const auto& [phrase, grain] : lex_.grains) {
    if (auto g = dates::parse_grain(grain)) breakdown_table.emplace_back(phrase, TimeGrain{*g});
  }
  for (const auto& [phrase, field] : lex_.dimensions) breakdown_table.emplace_back(phrase, Dimension{field});
  for (const auto& hit : take_phrases(m, breakdown_table)) {
    if (std::find(f.breakdown.begin(), f.breakdown.end(), hit.value) == f.breakdown.end()) f.breakdown.push_back(hit.value);
  }

  if (kind_filterable) {
    if (auto kinds = take_phrases(m, lex_.kinds); !kinds.empty()) {
      f.filters.push_back({"kind", FilterOp::eq, {Cell{kinds.front().value}}});
    }
  }

  for (const std::string& w : lex_.ranking_words) f.ranking = f.ranking || has_word(m.low, w);
  for (const std::string& w : lex_.record_words) f.list_records = f.list_records || has_word(m.low, w);

  if (f.metrics.empty() && !f.knowledge_query && hint.previous) {
    const IntentFrame& prev = *hint.previous;
    const bool follow_up = f.date_expr || !f.target_phrases.empty() || !f.breakdown.empty() || f.wants_viz;
    if (follow_up) {
      f.metrics = prev.metrics;
      if (f.breakdown.empty()) f.breakdown = prev.breakdown;
      if (f.filters.empty()) f.filters = prev.filters;
      f.ranking = f.ranking || prev.ranking;
      f.list_records = f.list_records || prev.list_records;
    }
  }

  if (!f.wellformed()) throw UninterpretableIntent("no metric or target in message");
  return f;
}

std::string select_for_metric(const Lexicon& lex, const Catalog& catalog, std::string_view metric) {
  if (const MetricEntry* e = lex.find(metric)) return e->select;
  if (const FieldDef* f = catalog.find(metric); f && f->kind == FieldKind::computed) return std::string(metric);
  return std::string(metric);
}

AnalyticsRequest RuleBackend::draft_request(const DraftContext& ctx) const {
  if (!ctx.catalog) throw DraftError("draft needs a catalog");
  const IntentFrame& f = ctx.frame;
  const Endpoint endpoint = classify_endpoint(f);

  AnalyticsRequest r;
  r.endpoint = std::string(endpoint_name(endpoint));
  r.start_date = dates::format_date(ctx.range.start);
  r.end_date = dates::format_date(ctx.range.end);
  r.timezone = ctx.range.tz;
  r.targets = ctx.targets;
  r.filters = f.filters;

  if (endpoint == Endpoint::records) {
    r.select = lex_.record_columns;
  } else {
    for (const std::string& metric : f.metrics) r.select.push_back(select_for_metric(lex_, *ctx.catalog, metric));
    if (r.select.empty()) r.select.push_back(lex_.default_select);
  }

  if (endpoint == Endpoint::timeseries || endpoint == Endpoint::aggregate_metrics) {
    bool grain_seen = false;
    for (const GroupByKey& k : f.breakdown) {
      if (std::holds_alternative<TimeGrain>(k)) {
        if (grain_seen) continue;
        grain_seen = true;
      }
      r.group_by.push_back(group_key_name(k));
    }
  }

  if (endpoint == Endpoint::leaderboard && !r.select.empty()) {
    auto parsed = parse_select(r.select.front(), *ctx.catalog);
    if (const auto* s = std::get_if<SelectExpr>(&parsed)) r.order_by.push_back({s->output_alias, SortDir::desc});
  }

  std::string why = std::string(endpoint_name(endpoint)) + " for ";
  why += f.metrics.empty() ? std::string("interaction counts") : util::split(r.select.front(), ' ').front();
  if (!r.group_by.empty()) {
    why += " grouped by";
    for (const std::string& g : r.group_by) why += " " + g;
  }
  r.explanation = why;
  return r;
}

ChartConfig RuleBackend::draft_chart(const TabularResult& result, ChartType type, const ChartContext& context) const {
  return build_chart_config(result, type, context);
}

}  // namespace govq
