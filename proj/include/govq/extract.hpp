#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace govq {

enum class Verdict { Correct, Incorrect };

std::string_view verdict_name(Verdict v);

struct JudgeVerdict {
  Verdict verdict = Verdict::Correct;
  /// Set iff the verdict is Incorrect.
  std::optional<std::string> reason;

  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

nlohmann::json to_json(const JudgeVerdict& v);

/// Finds the outermost JSON object in model output, ignoring code fences and
/// surrounding prose. Throws ParseError (with the offset where scanning gave
/// up) when no complete object parses.
nlohmann::json extract_json_object(std::string_view text);

/// Accepts a "Verdict: ... / Reason: ..." block (markdown emphasis allowed) or
/// a JSON object with "verdict" and "reason". Throws ParseError when the verdict
/// is missing, contradictory, or Incorrect without a reason.
JudgeVerdict extract_verdict(std::string_view text);

}  // namespace govq
