#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "haf/dataset.hpp"
#include "haf/losses.hpp"
#include "haf/metrics.hpp"
#include "haf/model.hpp"
#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double lr_backbone = 0.01;
  double lr_heads = 0.1;
  double momentum = 0.9;
  double margin = 3.0;
  int pairs_per_batch = 256;
  int margin_level_start = 1;  // margin applies to levels k..H-1
  LossFlags losses;
  std::uint64_t seed = 0;
  std::vector<int> mlp_dims = {64, 64};
  std::vector<int> eval_ks = {1, 5};
  bool log_metrics = true;  // per-epoch train/val metric snapshots
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double ce_fine = 0.0;
  double shc = 0.0;
  double margin = 0.0;
  double gc = 0.0;
  double total = 0.0;
  int empty_pair_batches = 0;
  double max_head_norm_deviation = 0.0;
  double wall_time_sec = 0.0;
  MetricsReport train_metrics;
  MetricsReport val_metrics;
};

struct TrainResult {
  ClassifierStack stack;
  std::vector<EpochLog> log;
};

/// Up to n_pairs sample-index pairs per level h in [k, H-1] whose level-h
/// labels differ, drawn uniformly with replacement; rejection sampling gives
/// up after 50 * n_pairs attempts per level, so a level with no dissimilar
/// pair yields an empty list rather than an error.
PairBatch sample_pairs(Rng& rng, const std::vector<int>& fine_labels,
                       const TaxonomyTree& tree, int k, int n_pairs);

/// Mini-batch SGD with momentum, separate learning rates for the MLP and the
/// heads, and a unit-norm projection of every head row after each step. Pair
/// batches are drawn whether or not the margin term is enabled, so runs with
/// different loss toggles see identical batches. Single-threaded and
/// bit-deterministic per seed.
TrainResult train(const TaxonomyTree& tree, const Dataset& train_ds,
                  const Dataset& val_ds, const TrainConfig& config);

/// One epoch per line. wall_time_sec is the only non-deterministic field.
std::string train_log_to_jsonl(const std::vector<EpochLog>& log);

/// Argmax-ranked predictions for a whole dataset, batched forward.
std::vector<std::vector<int>> predict_rankings(const ClassifierStack& stack,
                                               const Matrix& features);

}  // namespace haf
