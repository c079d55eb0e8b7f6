#pragma once

#include <string>
#include <string_view>

namespace govq {

/// Embedded in every prompt template; its presence in outbound text means a
/// template leaked.
inline constexpr std::string_view kPromptSentinel = "[[govq-tpl-5c1e9a]]";

inline constexpr std::string_view kRefusalText =
    "I can't help with that. I can answer analytics questions about the teams and metrics you have access to.";

struct GuardrailDecision {
  bool refused = false;
  /// Internal rule id for the audit log; never shown to the user.
  std::string rule;
};

GuardrailDecision apply_guardrails(std::string_view utterance);

/// True when the text is safe to release.
bool outbound_clean(std::string_view text);

}  // namespace govq
