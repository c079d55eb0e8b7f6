#include "govq/guardrails.hpp"

#include <regex>
#include <utility>
#include <vector>

#include "govq/util.hpp"

namespace govq {

namespace {

struct Rule {
  std::string id;
  std::regex pattern;
};

const std::vector<Rule>& rules() {
  auto rx = [](const char* p) { return std::regex(p, std::regex::icase | std::regex::ECMAScript); };
  static const std::vector<Rule> kRules = {
      {"override", rx(R"(\b(ignore|disregard|forget|override)\b.{0,40}\b(instruction|prompt|rule|polic|guardrail)s?)")},
      {"system_prompt", rx(R"(\b(system|hidden|internal|initial|developer)\s+(prompt|message|instruction)s?\b)")},
      {"prompt_dump", rx(R"(\b(print|show|reveal|repeat|dump|display|output|leak)\b.{0,30}\b(prompt|instructions|template)s?\b)")},
      {"tools", rx(R"(\b(hidden|internal|secret|available)\s+(tool|skill|function)s?\b|\btool\s+(schema|definition|list)s?\b)")},
      {"config", rx(R"(\b(your|the|system)\s+(config|configuration|settings|api\s+key|credentials?)\b)")},
      {"other_tenant", rx(R"(\b(other|another|different)\s+(tenant|customer|compan(y|ies)|organi[sz]ation)s?\b)")},
      {"inaccessible", rx(R"(\b(not|n't)\s+(allowed|permitted|authori[sz]ed)\b|\b(restricted|forbidden|inaccessible|hidden)\s+(target|team|group|office|department)s?\b)")},
      {"bypass", rx(R"(\b(bypass|circumvent|disable|skip|turn\s+off)\b.{0,30}\b(permission|access|security|mask|filter|check)s?)")},
      {"escalate", rx(R"(\b(act|pretend|behave)\s+as\s+(an?\s+)?(admin|administrator|root|superuser)|\b(developer|god|debug|dan)\s+mode\b|\bjailbreak)")},
      {"unmask", rx(R"(\b(unmask|de-?anonymi[sz]e|real\s+names?\s+behind|raw\s+(pii|personal))\b)")},
      {"enumerate", rx(R"(\b(list|show|enumerate)\s+(all|every)\s+(target|tenant|user|team|org)s?\b.{0,30}\b(exist|system|database|everyone)\b)")},
  };
  return kRules;
}

}  // namespace

GuardrailDecision apply_guardrails(std::string_view utterance) {
  const std::string text(utterance);
  for (const Rule& r : rules()) {
    if (std::regex_search(text, r.pattern)) return {true, r.id};
  }
  if (util::contains(text, kPromptSentinel)) return {true, "sentinel"};
  return {};
}

bool outbound_clean(std::string_view text) { return !util::contains(text, kPromptSentinel); }

}  // namespace govq
