#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"

namespace haf {

// Defaults give the desk-scale dataset: coarse structure is easy, mid-level
// contested and fine classes heavily overlapping, with few samples per class.
// In that regime hierarchy-aware training visibly reduces mistake severity.
struct SyntheticConfig {
  int input_dim = 16;
  int samples_per_class = 35;
  std::vector<double> level_spread = {7.0, 3.0, 1.2};
  double noise_sigma = 3.0;
  std::uint64_t seed = 42;
};

struct Dataset {
  Matrix features;              // N x input_dim
  std::vector<int> fine_labels;  // N entries
  int size() const { return static_cast<int>(features.rows()); }
};

/// Uniform tree with the given number of children per node at each level;
/// path segments are plain indices ("0/2/1").
TaxonomyTree branching_tree(const std::vector<int>& branching);

/// Hierarchical-Gaussian sampling: every node's center is its parent's center
/// plus an isotropic offset of scale level_spread[h-1]; samples add
/// noise_sigma noise around leaf centers. Split is per-class round-robin,
/// every fifth sample to test. Deterministic per seed.
std::pair<Dataset, Dataset> generate(const TaxonomyTree& tree,
                                     const SyntheticConfig& config);

/// CSV with header f0,...,f{d-1},label; label is the full leaf path.
std::string write_dataset(const Dataset& ds, const TaxonomyTree& tree);
Dataset read_dataset(const std::string& text, const TaxonomyTree& tree);

}  // namespace haf
