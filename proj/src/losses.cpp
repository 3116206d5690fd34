#include "haf/losses.hpp"

#include <cmath>
#include <cstddef>

#include "haf/error.hpp"

namespace haf {

CeResult ce_fine(const LevelPredictions& preds, int y_fine) {
  const Vector& p = preds.probs.back();
  if (y_fine < 0 || y_fine >= p.size()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "ce_fine: label " + std::to_string(y_fine) + " outside [0, " +
                    std::to_string(p.size()) + ")");
  }
  CeResult r;
  r.value = -safe_log(p[y_fine]);
  r.dlogits = p;
  r.dlogits[y_fine] -= 1.0;
  return r;
}

std::vector<Vector> build_soft_labels(const TaxonomyTree& tree,
                                      const LevelPredictions& preds) {
  const int levels = tree.num_levels();
  std::vector<Vector> soft;
  soft.reserve(levels > 0 ? levels - 1 : 0);
  for (int h = 1; h < levels; ++h) {
    const Vector& finer = preds.probs[h];  // level h+1, 0-indexed
    Vector agg = Vector::Zero(tree.classes_at(h));
    for (int c = 0; c < tree.classes_at(h); ++c) {
      for (int child : tree.children_of(h, c)) {
        agg[c] += finer[child];
      }
    }
    soft.push_back(std::move(agg));
  }
  return soft;
}

JsdResult jsd(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "jsd: arguments have lengths " + std::to_string(p.size()) +
                    " and " + std::to_string(q.size()));
  }
  JsdResult r;
  r.dp = Vector::Zero(p.size());
  r.dq = Vector::Zero(p.size());
  for (int i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double log_m = safe_log(m);
    if (p[i] > 0.0) r.value += 0.5 * p[i] * (safe_log(p[i]) - log_m);
    if (q[i] > 0.0) r.value += 0.5 * q[i] * (safe_log(q[i]) - log_m);
    r.dp[i] = 0.5 * (safe_log(p[i]) - log_m);
    r.dq[i] = 0.5 * (safe_log(q[i]) - log_m);
  }
  return r;
}

ShcResult shc_loss(const TaxonomyTree& tree, const LevelPredictions& preds) {
  const int levels = tree.num_levels();
  ShcResult r;
  r.dlogits.resize(levels);
  for (int h = 0; h < levels; ++h) {
    r.dlogits[h] = Vector::Zero(preds.probs[h].size());
  }
  const std::vector<Vector> soft = build_soft_labels(tree, preds);
  for (int h = 1; h < levels; ++h) {
    const Vector& coarse = preds.probs[h - 1];
    const Vector& finer = preds.probs[h];
    const JsdResult term = jsd(coarse, soft[h - 1]);
    r.value += term.value;
    r.dlogits[h - 1] += softmax_backward(coarse, term.dp);
    // The soft label is a linear aggregation of the finer distribution, so
    // each child inherits its super-class's gradient unchanged.
    Vector dfiner = Vector::Zero(finer.size());
    for (int c = 0; c < tree.classes_at(h); ++c) {
      for (int child : tree.children_of(h, c)) {
        dfiner[child] += term.dq[c];
      }
    }
    r.dlogits[h] += softmax_backward(finer, dfiner);
  }
  return r;
}

int PairBatch::total() const {
  std::size_t n = 0;
  for (const auto& level : per_level) n += level.size();
  return static_cast<int>(n);
}

MarginResult margin_loss(const ForwardTrace& trace, const PairBatch& pairs,
                         double margin) {
  const int levels = static_cast<int>(trace.probs.size());
  const int batch = trace.batch_size();
  MarginResult r;
  r.dlogits.resize(levels);
  for (int h = 0; h < levels; ++h) {
    r.dlogits[h] = Matrix::Zero(batch, trace.probs[h].cols());
  }
  const int n_pairs = pairs.total();
  if (n_pairs == 0) {
    r.empty_pair_batch = true;
    return r;
  }
  const int pair_levels =
      std::min<int>(static_cast<int>(pairs.per_level.size()), levels - 1);
  for (int h = 0; h < pair_levels; ++h) {
    for (const auto& [i, j] : pairs.per_level[h]) {
      if (i < 0 || i >= batch || j < 0 || j >= batch) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "margin_loss: pair index outside the batch");
      }
      const Vector pi = trace.probs[h].row(i).transpose();
      const Vector pj = trace.probs[h].row(j).transpose();
      const JsdResult div = jsd(pi, pj);
      if (div.value >= margin) continue;  // hinge inactive
      r.value += margin - div.value;
      r.dlogits[h].row(i) -= softmax_backward(pi, div.dp).transpose();
      r.dlogits[h].row(j) -= softmax_backward(pj, div.dq).transpose();
    }
  }
  r.value /= n_pairs;
  for (auto& d : r.dlogits) d /= n_pairs;
  return r;
}

GcResult gc_loss(const TaxonomyTree& tree, const ClassifierStack& stack) {
  const int levels = tree.num_levels();
  GcResult r;
  r.dheads.resize(levels);
  for (int h = 0; h < levels; ++h) {
    r.dheads[h] = Matrix::Zero(stack.heads[h].rows(), stack.heads[h].cols());
  }
  for (int h = 1; h < levels; ++h) {
    const Matrix& coarse = stack.heads[h - 1];
    const Matrix& finer = stack.heads[h];
    for (int c = 0; c < tree.classes_at(h); ++c) {
      Vector b = Vector::Zero(finer.cols());
      for (int child : tree.children_of(h, c)) {
        b += finer.row(child).transpose();
      }
      const double norm_b = b.norm();
      if (norm_b < 1e-8) {
        throw Error(ErrorCode::DegenerateChildSum,
                    "gc_loss: children of " + tree.class_name(h, c) +
                        " have a near-zero weight sum");
      }
      const Vector a = coarse.row(c).transpose();
      const double norm_a = a.norm();
      if (!(norm_a > 0.0)) {
        throw Error(ErrorCode::ZeroWeightRow,
                    "gc_loss: zero coarse row " + tree.class_name(h, c));
      }
      const double dot = a.dot(b);
      const double cosine = dot / (norm_a * norm_b);
      r.value += 1.0 - cosine;
      // d(1 - cos)/da = -b/(|a||b|) + cos * a/|a|^2, symmetric for b; every
      // child row shares b's gradient since b is their plain sum.
      const Vector da = -b / (norm_a * norm_b) + cosine * a / (norm_a * norm_a);
      const Vector db = -a / (norm_a * norm_b) + cosine * b / (norm_b * norm_b);
      r.dheads[h - 1].row(c) += da.transpose();
      for (int child : tree.children_of(h, c)) {
        r.dheads[h].row(child) += db.transpose();
      }
    }
  }
  return r;
}

LossBreakdown total_loss(const TaxonomyTree& tree, const ClassifierStack& stack,
                         const ForwardTrace& trace, const std::vector<int>& y_fine,
                         const PairBatch& pairs, const LossFlags& flags,
                         double margin) {
  const int levels = tree.num_levels();
  const int batch = trace.batch_size();
  if (batch == 0) {
    throw Error(ErrorCode::InvalidConfig, "total_loss: empty batch");
  }
  if (static_cast<int>(y_fine.size()) != batch) {
    throw Error(ErrorCode::LengthMismatch,
                "total_loss: " + std::to_string(y_fine.size()) +
                    " labels for a batch of " + std::to_string(batch));
  }
  LossBreakdown out;
  out.dlogits.resize(levels);
  out.dheads.resize(levels);
  for (int h = 0; h < levels; ++h) {
    out.dlogits[h] = Matrix::Zero(batch, tree.classes_at(h + 1));
    out.dheads[h] = Matrix::Zero(stack.heads[h].rows(), stack.heads[h].cols());
  }

  if (flags.ce_fine) {
    for (int i = 0; i < batch; ++i) {
      const LevelPredictions preds = trace.sample(i);
      const CeResult ce = ce_fine(preds, y_fine[i]);
      out.ce_fine += ce.value;
      out.dlogits[levels - 1].row(i) += ce.dlogits.transpose();
    }
    out.ce_fine /= batch;
    out.dlogits[levels - 1] /= batch;
  }

  if (flags.shc) {
    for (int i = 0; i < batch; ++i) {
      const LevelPredictions preds = trace.sample(i);
      const ShcResult shc = shc_loss(tree, preds);
      out.shc += shc.value;
      for (int h = 0; h < levels; ++h) {
        out.dlogits[h].row(i) += shc.dlogits[h].transpose() / batch;
      }
    }
    out.shc /= batch;
  }

  if (flags.margin) {
    const MarginResult m = margin_loss(trace, pairs, margin);
    out.margin = m.value;
    out.empty_pair_batch = m.empty_pair_batch;
    for (int h = 0; h < levels; ++h) {
      out.dlogits[h] += m.dlogits[h];
    }
  }

  if (flags.gc) {
    const GcResult gc = gc_loss(tree, stack);
    out.gc = gc.value;
    for (int h = 0; h < levels; ++h) {
      out.dheads[h] += gc.dheads[h];
    }
  }

  out.total = out.ce_fine + out.shc + out.margin + out.gc;
  return out;
}

double hxe_loss(const TaxonomyTree& tree, const Vector& fine_probs, int y_fine,
                double alpha) {
  const int levels = tree.num_levels();
  const int fine = tree.num_fine();
  if (fine_probs.size() != fine) {
    throw Error(ErrorCode::LengthMismatch,
                "hxe_loss: " + std::to_string(fine_probs.size()) +
                    " probabilities for " + std::to_string(fine) + " classes");
  }
  if (y_fine < 0 || y_fine >= fine) {
    throw Error(ErrorCode::IndexOutOfRange,
                "hxe_loss: label " + std::to_string(y_fine) + " outside [0, " +
                    std::to_string(fine) + ")");
  }
  // Marginal probability of the true ancestor at each level; the implicit
  // root has marginal 1.
  std::vector<double> marginal(levels + 1, 1.0);
  for (int h = 1; h <= levels; ++h) {
    const int ancestor = tree.coarse_label(y_fine, h);
    double sum = 0.0;
    for (int f = 0; f < fine; ++f) {
      if (tree.coarse_label(f, h) == ancestor) sum += fine_probs[f];
    }
    marginal[h] = sum;
  }
  double value = 0.0;
  for (int l = 0; l < levels; ++l) {
    const int child_level = levels - l;
    const double parent = std::max(marginal[child_level - 1], kProbFloor);
    const double conditional = marginal[child_level] / parent;
    value += std::exp(-alpha * l) * -safe_log(conditional);
  }
  return value;
}

}  // namespace haf
