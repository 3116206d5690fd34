#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

struct MetricsReport {
  double top1_error = 0.0;
  double mistake_severity = 0.0;  // NaN when mistakes_total == 0
  std::map<int, double> hier_dist_at;
  std::vector<double> coarse_accuracy;  // index h-1 for levels 1..H
  double lca_sum = 0.0;
  std::int64_t mistakes_total = 0;
  std::map<int, std::int64_t> mistake_histogram;
};

/// Evaluate ranked fine-class predictions against ground truth.
/// hier_dist_at[k] averages, over all samples, the mean LCA distance between
/// the truth and each of the sample's top-k predictions. mistake_severity
/// averages LCA over wrong top-1 predictions only. `threads` caps the worker
/// pool (0 = hardware default); results are identical for any thread count.
MetricsReport evaluate(const TaxonomyTree& tree, const LcaMatrix& lca,
                       const std::vector<std::vector<int>>& rankings,
                       const std::vector<int>& truths,
                       const std::vector<int>& ks, int threads = 0);

/// Per fine class, the minimum off-diagonal LCA distance; returned as a
/// histogram over classes.
std::map<int, std::int64_t> min_lca_histogram(const LcaMatrix& lca);

/// Stable JSON rendering of a report, floats at 17 significant digits,
/// NaN rendered as null. `mode` distinguishes plain vs crm evaluations.
std::string report_to_json(const MetricsReport& report, const std::string& mode,
                           std::uint64_t seed, const std::string& config_hash);

/// One metric per row, same content as the JSON form.
std::string report_to_csv(const MetricsReport& report, const std::string& mode,
                          std::uint64_t seed, const std::string& config_hash);

/// Single-line JSON object without run metadata, for embedding in logs.
std::string report_to_json_compact(const MetricsReport& report);

/// Fine classes of one probability row sorted by descending probability,
/// ties to the lower index.
std::vector<int> rank_by_probability(const Vector& probs);

}  // namespace haf
