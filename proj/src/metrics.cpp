#include "haf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "haf/error.hpp"
#include "haf/io.hpp"

namespace haf {

namespace {

struct SampleStats {
  std::uint8_t wrong = 0;
  int lca_top1 = 0;
  std::vector<double> mean_lca_at_k;      // aligned with ks
  std::vector<std::uint8_t> coarse_ok;    // per level
};

int resolve_threads(int requested, int n_samples) {
  int t = requested;
  if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
  if (t <= 0) t = 1;
  return std::max(1, std::min(t, n_samples));
}

}  // namespace

MetricsReport evaluate(const TaxonomyTree& tree, const LcaMatrix& lca,
                       const std::vector<std::vector<int>>& rankings,
                       const std::vector<int>& truths,
                       const std::vector<int>& ks, int threads) {
  const int n = static_cast<int>(rankings.size());
  if (truths.size() != rankings.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "evaluate: " + std::to_string(rankings.size()) +
                    " rankings vs " + std::to_string(truths.size()) +
                    " truth labels");
  }
  if (n == 0) {
    throw Error(ErrorCode::LengthMismatch, "evaluate: no samples");
  }
  const int fine = tree.num_fine();
  const int levels = tree.num_levels();
  std::size_t needed = 1;
  for (int k : ks) {
    if (k < 1 || k > fine) {
      throw Error(ErrorCode::RankListTooShort,
                  "evaluate: k = " + std::to_string(k) + " with " +
                      std::to_string(fine) + " fine classes");
    }
    needed = std::max(needed, static_cast<std::size_t>(k));
  }

  std::vector<SampleStats> stats(n);
  const int pool = resolve_threads(threads, n);
  std::vector<std::pair<ErrorCode, std::string>> worker_error(
      pool, {ErrorCode::IndexOutOfRange, ""});

  auto work = [&](int worker) {
    try {
      for (int i = worker; i < n; i += pool) {
        const auto& ranked = rankings[i];
        const int truth = truths[i];
        if (truth < 0 || truth >= fine) {
          throw Error(ErrorCode::IndexOutOfRange,
                      "evaluate: truth label " + std::to_string(truth) +
                          " at sample " + std::to_string(i));
        }
        if (ranked.size() < needed) {
          throw Error(ErrorCode::RankListTooShort,
                      "evaluate: ranking of length " +
                          std::to_string(ranked.size()) + " at sample " +
                          std::to_string(i) + ", need " +
                          std::to_string(needed));
        }
        SampleStats& s = stats[i];
        for (std::size_t r = 0; r < needed; ++r) {
          if (ranked[r] < 0 || ranked[r] >= fine) {
            throw Error(ErrorCode::IndexOutOfRange,
                        "evaluate: predicted class " +
                            std::to_string(ranked[r]) + " at sample " +
                            std::to_string(i));
          }
        }
        const int top1 = ranked[0];
        s.wrong = top1 != truth ? 1 : 0;
        s.lca_top1 = lca(truth, top1);
        s.mean_lca_at_k.reserve(ks.size());
        for (int k : ks) {
          double sum = 0.0;
          for (int r = 0; r < k; ++r) sum += lca(truth, ranked[r]);
          s.mean_lca_at_k.push_back(sum / k);
        }
        s.coarse_ok.resize(levels);
        for (int h = 1; h <= levels; ++h) {
          s.coarse_ok[h - 1] =
              tree.coarse_label(top1, h) == tree.coarse_label(truth, h) ? 1 : 0;
        }
      }
    } catch (const Error& e) {
      worker_error[worker] = {e.code(), e.what()};
    }
  };

  if (pool == 1) {
    work(0);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(pool);
    for (int w = 0; w < pool; ++w) workers.emplace_back(work, w);
    for (auto& t : workers) t.join();
  }
  for (const auto& [code, what] : worker_error) {
    if (!what.empty()) throw Error(code, what);
  }

  // Sequential reduction in sample order keeps results independent of the
  // worker count.
  MetricsReport report;
  report.coarse_accuracy.assign(levels, 0.0);
  std::vector<double> hd_sum(ks.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    const SampleStats& s = stats[i];
    if (s.wrong) {
      ++report.mistakes_total;
      report.lca_sum += s.lca_top1;
      ++report.mistake_histogram[s.lca_top1];
    }
    for (std::size_t j = 0; j < ks.size(); ++j) hd_sum[j] += s.mean_lca_at_k[j];
    for (int h = 0; h < levels; ++h) report.coarse_accuracy[h] += s.coarse_ok[h];
  }
  report.top1_error = static_cast<double>(report.mistakes_total) / n;
  report.mistake_severity =
      report.mistakes_total > 0
          ? report.lca_sum / static_cast<double>(report.mistakes_total)
          : std::numeric_limits<double>::quiet_NaN();
  for (std::size_t j = 0; j < ks.size(); ++j) {
    report.hier_dist_at[ks[j]] = hd_sum[j] / n;
  }
  for (int h = 0; h < levels; ++h) report.coarse_accuracy[h] /= n;
  return report;
}

std::map<int, std::int64_t> min_lca_histogram(const LcaMatrix& lca) {
  const int n = static_cast<int>(lca.rows());
  if (n < 2) {
    throw Error(ErrorCode::SingleClass,
                "min_lca_histogram: need at least two classes");
  }
  std::map<int, std::int64_t> hist;
  for (int i = 0; i < n; ++i) {
    int best = std::numeric_limits<int>::max();
    for (int j = 0; j < n; ++j) {
      if (j != i) best = std::min(best, lca(i, j));
    }
    ++hist[best];
  }
  return hist;
}

namespace {

void append_common(std::ostringstream& out, const MetricsReport& r) {
  out << "  \"top1_error\": " << format_double(r.top1_error) << ",\n";
  out << "  \"mistake_severity\": " << format_double(r.mistake_severity)
      << ",\n";
  out << "  \"mistakes_total\": " << r.mistakes_total << ",\n";
  out << "  \"lca_sum\": " << format_double(r.lca_sum) << ",\n";
  out << "  \"hier_dist_at\": [";
  bool first = true;
  for (const auto& [k, v] : r.hier_dist_at) {
    if (!first) out << ", ";
    first = false;
    out << "{\"k\": " << k << ", \"value\": " << format_double(v) << "}";
  }
  out << "],\n";
  out << "  \"coarse_accuracy\": [";
  for (std::size_t h = 0; h < r.coarse_accuracy.size(); ++h) {
    if (h) out << ", ";
    out << "{\"level\": " << h + 1
        << ", \"value\": " << format_double(r.coarse_accuracy[h]) << "}";
  }
  out << "],\n";
  out << "  \"mistake_histogram\": [";
  first = true;
  for (const auto& [d, c] : r.mistake_histogram) {
    if (!first) out << ", ";
    first = false;
    out << "{\"distance\": " << d << ", \"count\": " << c << "}";
  }
  out << "]\n";
}

}  // namespace

std::string report_to_json(const MetricsReport& report, const std::string& mode,
                           std::uint64_t seed, const std::string& config_hash) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"mode\": \"" << mode << "\",\n";
  out << "  \"seed\": " << seed << ",\n";
  out << "  \"config_hash\": \"" << config_hash << "\",\n";
  append_common(out, report);
  out << "}\n";
  return out.str();
}

std::string report_to_json_compact(const MetricsReport& r) {
  std::ostringstream out;
  out << "{\"top1_error\": " << format_double(r.top1_error)
      << ", \"mistake_severity\": " << format_double(r.mistake_severity)
      << ", \"mistakes_total\": " << r.mistakes_total
      << ", \"lca_sum\": " << format_double(r.lca_sum);
  out << ", \"hier_dist_at\": [";
  bool first = true;
  for (const auto& [k, v] : r.hier_dist_at) {
    if (!first) out << ", ";
    first = false;
    out << "{\"k\": " << k << ", \"value\": " << format_double(v) << "}";
  }
  out << "], \"coarse_accuracy\": [";
  for (std::size_t h = 0; h < r.coarse_accuracy.size(); ++h) {
    if (h) out << ", ";
    out << format_double(r.coarse_accuracy[h]);
  }
  out << "]}";
  return out.str();
}

std::vector<int> rank_by_probability(const Vector& probs) {
  std::vector<int> order(probs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  return order;
}

std::string report_to_csv(const MetricsReport& report, const std::string& mode,
                          std::uint64_t seed, const std::string& config_hash) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "mode," << mode << "\n";
  out << "seed," << seed << "\n";
  out << "config_hash," << config_hash << "\n";
  out << "top1_error," << format_double(report.top1_error) << "\n";
  out << "mistake_severity," << format_double(report.mistake_severity) << "\n";
  out << "mistakes_total," << report.mistakes_total << "\n";
  out << "lca_sum," << format_double(report.lca_sum) << "\n";
  for (const auto& [k, v] : report.hier_dist_at) {
    out << "hier_dist_at_" << k << "," << format_double(v) << "\n";
  }
  for (std::size_t h = 0; h < report.coarse_accuracy.size(); ++h) {
    out << "coarse_accuracy_" << h + 1 << ","
        << format_double(report.coarse_accuracy[h]) << "\n";
  }
  for (const auto& [d, c] : report.mistake_histogram) {
    out << "mistake_histogram_" << d << "," << c << "\n";
  }
  return out.str();
}

}  // namespace haf
