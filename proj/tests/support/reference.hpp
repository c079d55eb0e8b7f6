#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "govq/analytics_store.hpp"

namespace govq::testing {

/// Group key rendered as strings ("<null>" for missing) to aggregate values.
struct RefResult {
  std::map<std::vector<std::string>, std::vector<std::optional<double>>> groups;
  /// Records endpoint only, in output order.
  std::vector<std::string> record_ids;
  bool truncated = false;
};

/// Brute-force evaluation written straight from the metric definitions, with
/// its own field mapping, scope walk and UTC calendar math. UTC requests only.
RefResult reference_run(const ValidatedRequest& request, const Principal& principal, const Dataset& dataset,
                        std::size_t record_limit = 500);

/// The same shape read back from an executor result.
RefResult reshape(const TabularResult& table, Endpoint endpoint);

struct RefMismatch {
  bool equal = true;
  std::string message;
};

/// Counts and sums must match exactly; averages and ratios within `rel_tol`.
RefMismatch compare_ref(const RefResult& reference, const RefResult& actual, const ValidatedRequest& request,
                        double rel_tol = 1e-9);

}  // namespace govq::testing
