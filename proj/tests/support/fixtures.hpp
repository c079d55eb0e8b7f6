#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "govq/analytics_store.hpp"
#include "govq/eval.hpp"
#include "govq/planner.hpp"

namespace govq::testing {

inline std::filesystem::path source_dir() { return GOVQ_TEST_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "fixtures" / rel; }
inline std::filesystem::path golden(const std::string& rel) { return source_dir() / "tests" / "golden" / rel; }

/// The committed 1,000-record bundle, loaded once.
std::shared_ptr<const Dataset> smoke();
const PrincipalBook& principals();
std::shared_ptr<const RuleBackend> rule_backend();

/// 2025-06-18T17:00:00Z, the corpus clock.
dates::Instant corpus_now();
dates::CivilDate ymd(int y, unsigned m, unsigned d);
dates::Instant at(const std::string& iso);

Principal everyone(const Dataset& ds, bool unmasked = true);

}  // namespace govq::testing
