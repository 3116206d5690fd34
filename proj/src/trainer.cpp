#include "haf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "haf/error.hpp"
#include "haf/io.hpp"

namespace haf {

PairBatch sample_pairs(Rng& rng, const std::vector<int>& fine_labels,
                       const TaxonomyTree& tree, int k, int n_pairs) {
  const int levels = tree.num_levels();
  const int batch = static_cast<int>(fine_labels.size());
  PairBatch pairs;
  pairs.per_level.resize(levels > 0 ? levels - 1 : 0);
  if (batch < 2 || n_pairs < 1) return pairs;
  for (int h = k; h <= levels - 1; ++h) {
    auto& out = pairs.per_level[h - 1];
    const std::uint64_t cap = 50ull * static_cast<std::uint64_t>(n_pairs);
    std::uint64_t attempts = 0;
    while (static_cast<int>(out.size()) < n_pairs && attempts < cap) {
      ++attempts;
      const int i = static_cast<int>(rng.bounded(batch));
      const int j = static_cast<int>(rng.bounded(batch));
      if (tree.coarse_label(fine_labels[i], h) !=
          tree.coarse_label(fine_labels[j], h)) {
        out.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

namespace {

void validate_train_config(const TaxonomyTree& tree, const Dataset& train_ds,
                           const Dataset& val_ds, const TrainConfig& config) {
  if (config.epochs < 0) {
    throw Error(ErrorCode::InvalidConfig, "train: negative epoch count");
  }
  if (config.batch_size < 1) {
    throw Error(ErrorCode::InvalidConfig, "train: batch_size must be >= 1");
  }
  if (config.losses.margin && config.batch_size < 2) {
    throw Error(ErrorCode::InvalidConfig,
                "train: batch_size must be >= 2 with the margin loss enabled");
  }
  if (config.losses.margin && config.pairs_per_batch < 1) {
    throw Error(ErrorCode::InvalidConfig,
                "train: pairs_per_batch must be >= 1 with the margin loss "
                "enabled");
  }
  const int levels = tree.num_levels();
  if (levels >= 2 && (config.margin_level_start < 1 ||
                      config.margin_level_start > levels - 1)) {
    throw Error(ErrorCode::InvalidConfig,
                "train: margin_level_start must lie in [1, " +
                    std::to_string(levels - 1) + "]");
  }
  if (!(config.margin > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "train: margin must be positive");
  }
  if (config.lr_backbone < 0.0 || config.lr_heads < 0.0) {
    throw Error(ErrorCode::InvalidConfig,
                "train: learning rates must be non-negative");
  }
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "train: momentum must be in [0, 1)");
  }
  for (const Dataset* ds : {&train_ds, &val_ds}) {
    if (ds->size() == 0) {
      throw Error(ErrorCode::InvalidConfig, "train: empty dataset");
    }
    if (ds->features.cols() != train_ds.features.cols()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "train: train and validation feature widths differ");
    }
    for (int label : ds->fine_labels) {
      if (label < 0 || label >= tree.num_fine()) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "train: dataset label " + std::to_string(label) +
                        " outside the taxonomy");
      }
    }
  }
}

MetricsReport snapshot_metrics(const TaxonomyTree& tree, const LcaMatrix& lca,
                               const ClassifierStack& stack, const Dataset& ds,
                               const std::vector<int>& ks) {
  const auto rankings = predict_rankings(stack, ds.features);
  return evaluate(tree, lca, rankings, ds.fine_labels, ks, 1);
}

}  // namespace

std::vector<std::vector<int>> predict_rankings(const ClassifierStack& stack,
                                               const Matrix& features) {
  const int n = static_cast<int>(features.rows());
  std::vector<std::vector<int>> rankings;
  rankings.reserve(n);
  const int chunk = 512;
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    const ForwardTrace trace = forward(stack, features.middleRows(start, count));
    const Matrix& fine = trace.probs.back();
    for (int i = 0; i < count; ++i) {
      rankings.push_back(rank_by_probability(fine.row(i).transpose()));
    }
  }
  return rankings;
}

TrainResult train(const TaxonomyTree& tree, const Dataset& train_ds,
                  const Dataset& val_ds, const TrainConfig& config) {
  validate_train_config(tree, train_ds, val_ds, config);
  const int levels = tree.num_levels();
  const int n = train_ds.size();
  const int input_dim = static_cast<int>(train_ds.features.cols());

  Rng rng(config.seed);
  TrainResult result;
  result.stack =
      ClassifierStack::random(tree, input_dim, config.mlp_dims, rng);
  ClassifierStack& stack = result.stack;

  // Momentum buffers, one per parameter group.
  std::vector<Matrix> vel_w;
  std::vector<Vector> vel_b;
  std::vector<Matrix> vel_heads;
  for (const auto& layer : stack.mlp) {
    vel_w.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
    vel_b.push_back(Vector::Zero(layer.bias.size()));
  }
  for (const auto& head : stack.heads) {
    vel_heads.push_back(Matrix::Zero(head.rows(), head.cols()));
  }

  const LcaMatrix lca =
      config.log_metrics ? build_lca_matrix(tree) : LcaMatrix();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;

    // Seeded Fisher-Yates; the same stream also feeds pair sampling, so the
    // whole schedule is one deterministic sequence.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.bounded(i + 1));
      std::swap(order[i], order[j]);
    }

    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size, ++batches) {
      const int count = std::min(config.batch_size, n - start);
      Matrix x(count, input_dim);
      std::vector<int> y(count);
      for (int i = 0; i < count; ++i) {
        x.row(i) = train_ds.features.row(order[start + i]);
        y[i] = train_ds.fine_labels[order[start + i]];
      }

      const ForwardTrace trace = forward(stack, x);
      // Pairs are drawn regardless of the margin toggle so every loss
      // configuration consumes the identical RNG stream and sees the same
      // batches; this is what makes ablation runs comparable batch by batch.
      const PairBatch pairs =
          sample_pairs(rng, y, tree, config.margin_level_start,
                       config.pairs_per_batch);
      const LossBreakdown lb = total_loss(tree, stack, trace, y, pairs,
                                          config.losses, config.margin);
      if (!std::isfinite(lb.total)) {
        throw Error(ErrorCode::DivergedLoss,
                    "train: non-finite loss at epoch " +
                        std::to_string(epoch) + ", batch " +
                        std::to_string(batches));
      }
      log.ce_fine += lb.ce_fine;
      log.shc += lb.shc;
      log.margin += lb.margin;
      log.gc += lb.gc;
      log.total += lb.total;
      if (lb.empty_pair_batch) ++log.empty_pair_batches;

      ParamGrads grads = backward(stack, trace, lb.dlogits);
      for (int h = 0; h < levels; ++h) grads.heads[h] += lb.dheads[h];

      for (std::size_t l = 0; l < stack.mlp.size(); ++l) {
        vel_w[l] = config.momentum * vel_w[l] + grads.mlp_weight[l];
        vel_b[l] = config.momentum * vel_b[l] + grads.mlp_bias[l];
        stack.mlp[l].weight -= config.lr_backbone * vel_w[l];
        stack.mlp[l].bias -= config.lr_backbone * vel_b[l];
      }
      for (int h = 0; h < levels; ++h) {
        vel_heads[h] = config.momentum * vel_heads[h] + grads.heads[h];
        stack.heads[h] -= config.lr_heads * vel_heads[h];
      }
      project_unit_norm(stack);
      log.max_head_norm_deviation = std::max(log.max_head_norm_deviation,
                                             max_head_norm_deviation(stack));
    }

    if (batches > 0) {
      log.ce_fine /= batches;
      log.shc /= batches;
      log.margin /= batches;
      log.gc /= batches;
      log.total /= batches;
    }
    if (config.log_metrics) {
      log.train_metrics =
          snapshot_metrics(tree, lca, stack, train_ds, config.eval_ks);
      log.val_metrics =
          snapshot_metrics(tree, lca, stack, val_ds, config.eval_ks);
    }
    log.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.push_back(std::move(log));
  }
  return result;
}

std::string train_log_to_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  for (const auto& e : log) {
    out << "{\"epoch\": " << e.epoch
        << ", \"ce_fine\": " << format_double(e.ce_fine)
        << ", \"shc\": " << format_double(e.shc)
        << ", \"margin\": " << format_double(e.margin)
        << ", \"gc\": " << format_double(e.gc)
        << ", \"total\": " << format_double(e.total)
        << ", \"empty_pair_batches\": " << e.empty_pair_batches
        << ", \"max_head_norm_deviation\": "
        << format_double(e.max_head_norm_deviation)
        << ", \"wall_time_sec\": " << format_double(e.wall_time_sec)
        << ", \"train\": " << report_to_json_compact(e.train_metrics)
        << ", \"val\": " << report_to_json_compact(e.val_metrics) << "}\n";
  }
  return out.str();
}

}  // namespace haf
