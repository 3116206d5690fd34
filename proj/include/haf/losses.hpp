#pragma once

#include <utility>
#include <vector>

#include "haf/model.hpp"
#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

struct LossFlags {
  bool ce_fine = true;
  bool shc = true;
  bool margin = true;
  bool gc = true;
};

struct CeResult {
  double value = 0.0;
  Vector dlogits;  // w.r.t. finest-level logits
};

/// Cross-entropy against the fine ground truth: -log p^H[y].
/// Gradient w.r.t. logits is p^H - onehot(y).
CeResult ce_fine(const LevelPredictions& preds, int y_fine);

/// Soft labels per coarse level h = 1..H-1: the level-h probability of a
/// super-class is the sum of its children's level-(h+1) predicted
/// probabilities. Index h-1 holds the level-h vector.
std::vector<Vector> build_soft_labels(const TaxonomyTree& tree,
                                      const LevelPredictions& preds);

struct JsdResult {
  double value = 0.0;
  Vector dp;
  Vector dq;
};

/// Jensen-Shannon divergence in nats with m = (p+q)/2; symmetric in its
/// arguments and bounded by ln 2. Gradients are w.r.t. the raw probability
/// entries (chain through softmax separately).
JsdResult jsd(const Vector& p, const Vector& q);

struct ShcResult {
  double value = 0.0;
  std::vector<Vector> dlogits;  // [h-1], every level can receive gradient
};

/// Soft hierarchical consistency: sum over h = 1..H-1 of
/// JS(p^h || soft_label^h). No stop-gradient: both the coarse classifier
/// and the finer one it aggregates receive gradient.
ShcResult shc_loss(const TaxonomyTree& tree, const LevelPredictions& preds);

// Sample-index pairs with dissimilar labels, kept per level. Only levels in
// the configured margin range are populated.
struct PairBatch {
  std::vector<std::vector<std::pair<int, int>>> per_level;  // [h-1]
  int total() const;
};

struct MarginResult {
  double value = 0.0;
  std::vector<Matrix> dlogits;  // [h-1], batch x |C^h|
  bool empty_pair_batch = false;
};

/// Pairwise hinge pushing dissimilar-label samples apart in JSD:
/// mean over pairs of max(0, margin - JS(p_i^h || p_j^h)).
MarginResult margin_loss(const ForwardTrace& trace, const PairBatch& pairs,
                         double margin);

struct GcResult {
  double value = 0.0;
  std::vector<Matrix> dheads;  // [h-1]
};

/// Geometric consistency: for every coarse class, one minus the cosine
/// between its weight row and the (normalized) sum of its children's rows.
/// The target is not detached, so child rows receive gradient too.
GcResult gc_loss(const TaxonomyTree& tree, const ClassifierStack& stack);

struct LossBreakdown {
  double ce_fine = 0.0;
  double shc = 0.0;
  double margin = 0.0;
  double gc = 0.0;
  double total = 0.0;
  std::vector<Matrix> dlogits;  // [h-1], batch x |C^h|
  std::vector<Matrix> dheads;   // [h-1], direct head gradients (from gc)
  bool empty_pair_batch = false;
};

/// Unweighted sum of the enabled terms over one batch: ce_fine and shc are
/// averaged over samples, margin over pairs, gc computed once (it depends
/// only on the head weights). Disabled terms contribute exactly zero.
LossBreakdown total_loss(const TaxonomyTree& tree, const ClassifierStack& stack,
                         const ForwardTrace& trace, const std::vector<int>& y_fine,
                         const PairBatch& pairs, const LossFlags& flags,
                         double margin);

/// Hierarchical cross-entropy baseline: exponentially weighted sum of
/// negative log conditionals along the true path, with conditionals derived
/// from the fine distribution by aggregation. weight(l) = exp(-alpha * l),
/// l = 0 at the finest level. alpha = 0 collapses to plain fine CE.
double hxe_loss(const TaxonomyTree& tree, const Vector& fine_probs, int y_fine,
                double alpha);

}  // namespace haf
