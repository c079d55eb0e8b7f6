#include "fixtures.hpp"

#include <stdexcept>

namespace govq::testing {

std::shared_ptr<const Dataset> smoke() {
  static const auto ds = std::make_shared<const Dataset>(load_dataset(fixture("smoke")));
  return ds;
}

const PrincipalBook& principals() {
  static const PrincipalBook book = load_principals(fixture("principals.json"));
  return book;
}

std::shared_ptr<const RuleBackend> rule_backend() {
  static const auto backend =
      std::make_shared<const RuleBackend>(Lexicon::load(source_dir() / "data" / "lexicon.json"));
  return backend;
}

dates::Instant at(const std::string& iso) {
  auto t = dates::parse_timestamp(iso);
  if (!t) throw std::invalid_argument("bad timestamp " + iso);
  return *t;
}

dates::Instant corpus_now() { return at("2025-06-18T17:00:00Z"); }

dates::CivilDate ymd(int y, unsigned m, unsigned d) {
  return std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d};
}

Principal everyone(const Dataset& ds, bool unmasked) {
  std::set<std::string> caps;
  if (unmasked) caps.insert("unmasked");
  return make_principal("u-all", ds.org, ds.org.roots(), caps);
}

}  // namespace govq::testing
