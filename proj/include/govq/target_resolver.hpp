#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "govq/org.hpp"

namespace govq {

struct Candidate {
  std::string id;
  std::string name;
  double score = 0;
  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct Resolved {
  std::vector<std::string> ids;
  friend bool operator==(const Resolved&, const Resolved&) = default;
};
struct Ambiguous {
  /// Score descending, then name ascending; at most kMaxCandidates.
  std::vector<Candidate> candidates;
  friend bool operator==(const Ambiguous&, const Ambiguous&) = default;
};
struct NotFound {
  friend bool operator==(const NotFound&, const NotFound&) = default;
};
/// Carries only the phrase the user typed.
struct Denied {
  std::string phrase;
  friend bool operator==(const Denied&, const Denied&) = default;
};

using ResolutionOutcome = std::variant<Resolved, Ambiguous, NotFound, Denied>;

inline constexpr double kResolveThreshold = 0.75;
inline constexpr double kResolveMargin = 0.15;
inline constexpr double kCandidateThreshold = 0.5;
inline constexpr std::size_t kMaxCandidates = 5;

/// Token-overlap score of a phrase against one label of a node. Phrase tokens
/// may also match the node's kind words; tokens of 3+ characters match with
/// one edit.
double match_score(std::string_view phrase, std::string_view label, NodeKind kind);

/// Fuzzy resolution restricted to the principal's permitted nodes.
ResolutionOutcome resolve_targets(std::string_view phrase, const OrgIndex& org, const Principal& principal);

/// Throws UnknownTarget when the id is not in the org.
bool check_permission(const Principal& principal, std::string_view target_id, const OrgIndex& org);

}  // namespace govq
