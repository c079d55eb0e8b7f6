#include "govq/extract.hpp"

#include <regex>
#include <vector>

#include "govq/errors.hpp"
#include "govq/util.hpp"

namespace govq {

std::string_view verdict_name(Verdict v) { return v == Verdict::Correct ? "Correct" : "Incorrect"; }

nlohmann::json to_json(const JudgeVerdict& v) {
  nlohmann::json j = {{"verdict", verdict_name(v.verdict)}};
  if (v.reason) j["reason"] = *v.reason;
  return j;
}

namespace {

// End of the balanced object starting at `open`, or npos when it never closes.
std::size_t match_object(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

std::optional<nlohmann::json> first_object(std::string_view text, std::size_t& furthest) {
  for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
    const std::size_t close = match_object(text, open);
    if (close == std::string_view::npos) {
      furthest = std::max(furthest, text.size());
      continue;
    }
    furthest = std::max(furthest, close);
    auto parsed = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

std::vector<std::string_view> fenced_blocks(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    ++body;
    const std::size_t close = text.find("```", body);
    if (close == std::string_view::npos) {
      out.push_back(text.substr(body));
      break;
    }
    out.push_back(text.substr(body, close - body));
    pos = close + 3;
  }
  return out;
}

}  // namespace

nlohmann::json extract_json_object(std::string_view text) {
  std::size_t furthest = 0;
  for (std::string_view block : fenced_blocks(text)) {
    std::size_t ignored = 0;
    if (auto j = first_object(block, ignored)) return *j;
  }
  if (auto j = first_object(text, furthest)) return *j;
  throw ParseError("no JSON object found in model output", furthest);
}

JudgeVerdict extract_verdict(std::string_view text) {
  static const std::regex kVerdictLine(R"(^[\s>#*_\-]*verdict[\s*_]*[:\-][\s*_`"]*(incorrect|correct)\b)",
                                       std::regex::icase);
  static const std::regex kReasonLine(R"(^[\s>#*_\-]*(?:reason|rationale)[\s*_]*:[\s*_]*(.*)$)", std::regex::icase);

  std::optional<Verdict> verdict;
  std::size_t verdict_offset = 0;
  std::optional<std::string> reason;
  const std::string s(text);
  std::size_t pos = 0;
  bool in_reason = false;
  while (pos <= s.size()) {
    std::size_t eol = s.find('\n', pos);
    if (eol == std::string::npos) eol = s.size();
    const std::string line = s.substr(pos, eol - pos);
    std::smatch m;
    if (std::regex_search(line, m, kVerdictLine)) {
      const Verdict v = util::to_lower(m[1].str()) == "correct" ? Verdict::Correct : Verdict::Incorrect;
      if (verdict && *verdict != v) throw ParseError("contradictory verdict lines", pos);
      verdict = v;
      verdict_offset = pos;
      in_reason = false;
    } else if (std::regex_search(line, m, kReasonLine)) {
      reason = util::trim(m[1].str());
      in_reason = true;
    } else if (in_reason) {
      const std::string t = util::trim(line);
      if (t.empty() || t.rfind("```", 0) == 0) {
        in_reason = false;
      } else {
        *reason += " " + t;
      }
    }
    pos = eol + 1;
  }

  if (!verdict) {
    nlohmann::json j;
    try {
      j = extract_json_object(text);
    } catch (const ParseError& e) {
      throw ParseError("no verdict found in judge output", e.offset());
    }
    if (!j.contains("verdict") || !j["verdict"].is_string()) throw ParseError("judge JSON has no verdict field");
    const std::string v = util::to_lower(util::trim(j["verdict"].get<std::string>()));
    if (v == "correct") {
      verdict = Verdict::Correct;
    } else if (v == "incorrect") {
      verdict = Verdict::Incorrect;
    } else {
      throw ParseError("unknown verdict value: " + v);
    }
    if (j.contains("reason") && j["reason"].is_string()) reason = util::trim(j["reason"].get<std::string>());
  }

  if (reason) {
    while (!reason->empty() && (reason->back() == '*' || reason->back() == '_')) reason->pop_back();
    *reason = util::trim(*reason);
    if (reason->empty()) reason.reset();
  }
  if (*verdict == Verdict::Correct) return {Verdict::Correct, std::nullopt};
  if (!reason) throw ParseError("Incorrect verdict without a reason", verdict_offset);
  return {Verdict::Incorrect, reason};
}

}  // namespace govq
