#include "govq/target_resolver.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "govq/errors.hpp"
#include "govq/util.hpp"

namespace govq {

namespace {

const std::set<std::string> kStopwords = {"the", "a", "an", "for", "at", "in", "of", "on", "my", "our"};

std::vector<std::string> content_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (std::string& t : util::word_tokens(text)) {
    if (!kStopwords.count(t)) out.push_back(std::move(t));
  }
  return out;
}

const std::vector<std::string>& kind_words(NodeKind k) {
  static const std::map<NodeKind, std::vector<std::string>> kWords = {
      {NodeKind::office, {"office"}},
      {NodeKind::department, {"department", "dept"}},
      {NodeKind::team, {"team", "group"}},
      {NodeKind::call_center, {"call", "center", "centre"}},
      {NodeKind::agent_group, {"agent", "group", "team"}},
  };
  return kWords.at(k);
}

bool token_match(const std::string& a, const std::string& b) {
  if (a == b) return true;
  if (a.size() < 3 || b.size() < 3) return false;
  return util::edit_distance(a, b) <= 1;
}

}  // namespace

double match_score(std::string_view phrase, std::string_view label, NodeKind kind) {
  const auto p = content_tokens(phrase);
  const auto n = content_tokens(label);
  if (p.empty() || n.empty()) return 0;
  std::vector<bool> used(n.size(), false);
  std::size_t m = 0;
  std::size_t name_hits = 0;
  for (const std::string& t : p) {
    bool hit = false;
    for (std::size_t i = 0; i < n.size() && !hit; ++i) {
      if (!used[i] && token_match(t, n[i])) {
        used[i] = true;
        hit = true;
        ++name_hits;
      }
    }
    if (!hit) {
      for (const std::string& w : kind_words(kind)) hit = hit || token_match(t, w);
    }
    if (hit) ++m;
  }
  // Kind words alone never make a match.
  if (name_hits == 0) return 0;
  return static_cast<double>(m) / static_cast<double>(std::max(p.size(), n.size()));
}

ResolutionOutcome resolve_targets(std::string_view phrase, const OrgIndex& org, const Principal& principal) {
  const std::string wanted = util::normalize_space(phrase);
  if (wanted.empty()) return NotFound{};

  auto names_exactly = [&wanted](const OrgNode& n) {
    if (util::normalize_space(n.name) == wanted) return true;
    for (const std::string& a : n.aliases) {
      if (util::normalize_space(a) == wanted) return true;
    }
    return false;
  };

  std::vector<const OrgNode*> exact;
  bool forbidden_exact = false;
  for (const OrgNode& n : org.nodes()) {
    if (!names_exactly(n)) continue;
    if (principal.permits(n.id)) {
      exact.push_back(&n);
    } else {
      forbidden_exact = true;
    }
  }
  if (exact.size() == 1) return Resolved{{exact.front()->id}};
  if (exact.size() > 1) {
    Ambiguous out;
    for (const OrgNode* n : exact) out.candidates.push_back({n->id, n->name, 1.0});
    std::sort(out.candidates.begin(), out.candidates.end(),
              [](const Candidate& a, const Candidate& b) { return std::tie(a.name, a.id) < std::tie(b.name, b.id); });
    if (out.candidates.size() > kMaxCandidates) out.candidates.resize(kMaxCandidates);
    return out;
  }
  if (forbidden_exact) return Denied{std::string(phrase)};

  std::vector<Candidate> scored;
  for (const OrgNode& n : org.nodes()) {
    if (!principal.permits(n.id)) continue;
    double best = match_score(phrase, n.name, n.kind);
    for (const std::string& a : n.aliases) best = std::max(best, match_score(phrase, a, n.kind));
    if (best > 0) scored.push_back({n.id, n.name, best});
  }
  std::sort(scored.begin(), scored.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.name, a.id) < std::tie(b.name, b.id);
  });
  if (scored.empty()) return NotFound{};
  const double runner_up = scored.size() > 1 ? scored[1].score : 0.0;
  if (scored[0].score >= kResolveThreshold && scored[0].score - runner_up >= kResolveMargin - 1e-12) {
    return Resolved{{scored[0].id}};
  }
  Ambiguous out;
  for (const Candidate& c : scored) {
    if (c.score >= kCandidateThreshold && out.candidates.size() < kMaxCandidates) out.candidates.push_back(c);
  }
  if (out.candidates.empty()) return NotFound{};
  return out;
}

bool check_permission(const Principal& principal, std::string_view target_id, const OrgIndex& org) {
  if (!org.find(target_id)) throw UnknownTarget("unknown target " + std::string(target_id));
  return principal.permits(target_id);
}

}  // namespace govq
