#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "govq/errors.hpp"
#include "govq/target_resolver.hpp"
#include "govq/util.hpp"

using namespace govq;
using govq::testing::everyone;
using govq::testing::smoke;

namespace {

OrgIndex harbor_org() {
  return OrgIndex({
      {"o-harbor", "t1", "Harbor Office", NodeKind::office, std::nullopt, {}},
      {"t-north", "t1", "Support North", NodeKind::team, "o-harbor", {}},
      {"t-south", "t1", "Support South", NodeKind::team, "o-harbor", {}},
      {"t-ops", "t1", "Operations", NodeKind::team, "o-harbor", {"ops"}},
  });
}

std::vector<std::string> ids_of(const ResolutionOutcome& o) {
  if (const auto* r = std::get_if<Resolved>(&o)) return r->ids;
  std::vector<std::string> out;
  if (const auto* a = std::get_if<Ambiguous>(&o)) {
    for (const auto& c : a->candidates) out.push_back(c.id);
  }
  return out;
}

}  // namespace

TEST_CASE("alias resolves to a unique agent group") {
  const auto ds = smoke();
  const auto out = resolve_targets("Seattle support team", ds->org, everyone(*ds));
  CHECK(out == ResolutionOutcome{Resolved{{"g-sea-support"}}});
}

TEST_CASE("fuzzy match tolerates one edit") {
  const auto ds = smoke();
  CHECK(resolve_targets("Seattle Suport", ds->org, everyone(*ds)) == ResolutionOutcome{Resolved{{"g-sea-support"}}});
  CHECK(resolve_targets("billing team", ds->org, everyone(*ds)) == ResolutionOutcome{Resolved{{"t-billing"}}});
  CHECK(resolve_targets("Biling", ds->org, everyone(*ds)) == ResolutionOutcome{Resolved{{"t-billing"}}});
  CHECK(resolve_targets("headquarters", ds->org, everyone(*ds)) == ResolutionOutcome{Resolved{{"o-primary"}}});
}

TEST_CASE("two support teams are ambiguous") {
  const OrgIndex org = harbor_org();
  const Principal p = make_principal("u", org, {"o-harbor"});
  // {support} against {support, north}: one shared token over max(1, 2) tokens.
  CHECK(match_score("Support", "Support North", NodeKind::team) == doctest::Approx(0.5));
  CHECK(match_score("Support", "Support South", NodeKind::team) == doctest::Approx(0.5));
  CHECK(match_score("Support", "Harbor Office", NodeKind::office) == 0.0);
  const auto out = resolve_targets("Support", org, p);
  REQUIRE(std::holds_alternative<Ambiguous>(out));
  const auto& c = std::get<Ambiguous>(out).candidates;
  REQUIRE(c.size() == 2);
  CHECK(c[0].name == "Support North");
  CHECK(c[1].name == "Support South");
  CHECK(c[0].score >= kCandidateThreshold);
}

TEST_CASE("kind words need a name hit") {
  CHECK(match_score("team", "Operations", NodeKind::team) == 0.0);
  CHECK(match_score("north team", "Support North", NodeKind::team) == doctest::Approx(1.0));
}

TEST_CASE("denied only on an exact forbidden name") {
  const auto ds = smoke();
  const Principal care = make_principal("u", ds->org, {"t-care"});
  CHECK(resolve_targets("Billing", ds->org, care) == ResolutionOutcome{Denied{"Billing"}});
  CHECK(resolve_targets("billing", ds->org, care) == ResolutionOutcome{Denied{"billing"}});
  // Near misses outside scope look like nothing at all.
  CHECK(resolve_targets("Biling", ds->org, care) == ResolutionOutcome{NotFound{}});
  CHECK(resolve_targets("Customer Care", ds->org, care) == ResolutionOutcome{Resolved{{"t-care"}}});
  CHECK(resolve_targets("Narnia", ds->org, care) == ResolutionOutcome{NotFound{}});
  CHECK(resolve_targets("   ", ds->org, care) == ResolutionOutcome{NotFound{}});
}

TEST_CASE("candidate list is capped and ordered") {
  std::vector<OrgNode> nodes = {{"root", "t1", "Root", NodeKind::office, std::nullopt, {}}};
  for (int i = 0; i < 8; ++i) {
    nodes.push_back({"t" + std::to_string(i), "t1", "Desk " + std::string(1, static_cast<char>('Q' - i)), NodeKind::team, "root", {}});
  }
  const OrgIndex org(nodes);
  const auto out = resolve_targets("desk", org, make_principal("u", org, {"root"}));
  REQUIRE(std::holds_alternative<Ambiguous>(out));
  const auto& c = std::get<Ambiguous>(out).candidates;
  CHECK(c.size() == kMaxCandidates);
  for (std::size_t i = 1; i < c.size(); ++i) {
    CHECK(c[i - 1].score >= c[i].score);
    if (c[i - 1].score == c[i].score) CHECK(c[i - 1].name < c[i].name);
  }
}

TEST_CASE("check_permission") {
  const auto ds = smoke();
  const Principal p = make_principal("u", ds->org, {"d-services"});
  CHECK(check_permission(p, "d-services", ds->org));
  CHECK(check_permission(p, "t-care", ds->org));
  CHECK_FALSE(check_permission(p, "c-support", ds->org));
  CHECK_THROWS_AS(check_permission(p, "t-999", ds->org), UnknownTarget);
  CHECK_THROWS_AS(make_principal("u", ds->org, {"t-999"}), UnknownTarget);
}

TEST_CASE("org index integrity") {
  CHECK_THROWS_AS(OrgIndex({{"a", "t", "A", NodeKind::office, "b", {}}, {"b", "t", "B", NodeKind::team, "a", {}}}),
                  IntegrityError);
  CHECK_THROWS_AS(OrgIndex({{"a", "t", "A", NodeKind::office, std::nullopt, {}}, {"a", "t", "B", NodeKind::team, "a", {}}}),
                  IntegrityError);
  CHECK_THROWS_AS(OrgIndex({{"a", "t", "A", NodeKind::office, "zzz", {}}}), IntegrityError);
  CHECK_THROWS_AS(OrgIndex({{"a", "t", "A", NodeKind::office, std::nullopt, {}}, {"b", "u", "B", NodeKind::team, "a", {}}}),
                  IntegrityError);
  const auto ds = smoke();
  CHECK(ds->org.leaves_under("o-primary") ==
        std::set<std::string>{"t-care", "t-billing", "g-sea-support", "g-pdx-support"});
  CHECK(ds->org.subtree("d-sales") == std::set<std::string>{"d-sales", "g-sales-in", "g-sales-out"});
}

TEST_CASE("properties over random phrases and principals") {
  const auto ds = smoke();
  std::mt19937_64 rng(77);
  std::vector<std::string> pool;
  for (const auto& n : ds->org.nodes()) {
    for (const auto& t : util::word_tokens(n.name)) pool.push_back(t);
    for (const auto& a : n.aliases) {
      for (const auto& t : util::word_tokens(a)) pool.push_back(t);
    }
  }
  for (const char* w : {"team", "group", "office", "the", "supprt", "east", "zzz", "department", "center"}) pool.push_back(w);
  std::vector<std::string> ids;
  for (const auto& n : ds->org.nodes()) ids.push_back(n.id);

  for (int i = 0; i < 500; ++i) {
    std::string phrase;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < n; ++k) phrase += (k ? " " : "") + pool[rng() % pool.size()];
    if (rng() % 5 == 0) phrase = ds->org.nodes()[rng() % ids.size()].name;

    std::vector<std::string> grants;
    for (const auto& id : ids) {
      if (rng() % 4 == 0) grants.push_back(id);
    }
    const Principal small = make_principal("u", ds->org, grants);
    std::vector<std::string> more = grants;
    more.push_back(ids[rng() % ids.size()]);
    const Principal big = make_principal("u", ds->org, more);
    CAPTURE(phrase);

    const auto out = resolve_targets(phrase, ds->org, small);
    // Determinism.
    CHECK(resolve_targets(phrase, ds->org, small) == out);
    // Scope containment.
    for (const auto& id : ids_of(out)) CHECK(small.permits(id));
    if (const auto* d = std::get_if<Denied>(&out)) CHECK(d->phrase == phrase);
    if (const auto* a = std::get_if<Ambiguous>(&out)) {
      CHECK(a->candidates.size() <= kMaxCandidates);
      CHECK(a->candidates.size() >= 1);
    }
    // Monotonicity.
    if (std::holds_alternative<Resolved>(out)) {
      CHECK_FALSE(std::holds_alternative<NotFound>(resolve_targets(phrase, ds->org, big)));
    }
  }
}
