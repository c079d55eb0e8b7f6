#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "govq/catalog.hpp"
#include "govq/date_resolver.hpp"
#include "govq/tabular.hpp"

namespace govq {

/// Field-definition block handed to the request drafter. Deterministic for a
/// catalog, so it can be cached per catalog version.
std::string render_field_context(const Catalog& catalog);

// System prompts. Each carries kPromptSentinel.
std::string orchestrator_prompt();
std::string intent_prompt();
std::string query_prompt();
std::string viz_prompt();
std::string judge_prompt();

std::string intent_user_message(std::string_view utterance, dates::CivilDate today);
std::string query_user_message(std::string_view utterance, std::string_view intent_json, std::string_view field_context,
                               const dates::DateRange& range, const std::vector<std::string>& targets,
                               const std::optional<std::string>& previous_error);
std::string viz_user_message(const TabularResult& result, std::string_view chart_type, std::string_view title);
std::string judge_user_message(std::string_view query, std::string_view reference, std::string_view candidate);

}  // namespace govq
