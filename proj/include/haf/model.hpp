#pragma once

#include <string>
#include <utility>
#include <vector>

#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

enum class Activation { Identity, Tanh };

const char* activation_name(Activation act);
Activation activation_from_name(const std::string& name);

struct MlpLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::Tanh;
};

// Shared feature extractor plus one linear head per hierarchy level. Heads
// have no bias and every head row is kept at unit L2 norm by projection
// after each optimizer step. An empty MLP means identity features.
struct ClassifierStack {
  int input_dim = 0;
  int feature_dim = 0;
  std::vector<MlpLayer> mlp;
  std::vector<Matrix> heads;  // heads[h-1]: |C^h| x feature_dim

  int num_levels() const { return static_cast<int>(heads.size()); }

  /// Gaussian init scaled by 1/sqrt(fan_in); head rows are unit-normalized.
  /// mlp_dims lists the layer widths; the last one is the feature dimension
  /// (empty mlp_dims gives identity features of size input_dim).
  static ClassifierStack random(const TaxonomyTree& tree, int input_dim,
                                const std::vector<int>& mlp_dims, Rng& rng);

  int param_count() const;
  Vector to_vector() const;
  void from_vector(const Vector& packed);

  void validate_against(const TaxonomyTree& tree) const;
};

struct LevelPredictions {
  std::vector<Vector> logits;  // [h-1]
  std::vector<Vector> probs;   // [h-1], softmax of logits
};

// Batched forward pass; keeps the per-layer outputs needed by backward.
struct ForwardTrace {
  Matrix input;                    // B x input_dim
  std::vector<Matrix> layer_out;   // per MLP layer, B x width
  Matrix features;                 // B x feature_dim
  std::vector<Matrix> logits;      // [h-1], B x |C^h|
  std::vector<Matrix> probs;       // [h-1], rowwise softmax
  int batch_size() const { return static_cast<int>(input.rows()); }
  LevelPredictions sample(int i) const;
};

// Gradients for every parameter group, in stack shapes.
struct ParamGrads {
  std::vector<Matrix> mlp_weight;
  std::vector<Vector> mlp_bias;
  std::vector<Matrix> heads;

  static ParamGrads zeros_like(const ClassifierStack& stack);
  Vector to_vector() const;
};

ForwardTrace forward(const ClassifierStack& stack, const Matrix& batch);

/// Single-sample convenience: (features, per-level predictions).
std::pair<Vector, LevelPredictions> forward_sample(const ClassifierStack& stack,
                                                   const Vector& x);

/// Chain rule from per-level logit gradients back to every parameter; the
/// per-head feature gradients sum into the shared MLP gradient.
ParamGrads backward(const ClassifierStack& stack, const ForwardTrace& trace,
                    const std::vector<Matrix>& dlogits);

/// Rescales every head row to unit L2 norm; the MLP is untouched.
void project_unit_norm(ClassifierStack& stack);

/// Largest |row_norm - 1| over all head rows.
double max_head_norm_deviation(const ClassifierStack& stack);

std::string save_checkpoint(const ClassifierStack& stack);
ClassifierStack load_checkpoint(const std::string& json_text);

}  // namespace haf
