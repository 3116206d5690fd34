#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "haf/error.hpp"

namespace haf {

/// Pairwise LCA distance between fine classes: symmetric, zero diagonal,
/// entries in [1, H] off the diagonal.
using LcaMatrix = Eigen::MatrixXi;

// Uniform-depth label hierarchy. Levels run 1..H with h=1 the coarsest and
// h=H the finest; the root (level 0) is implicit and never appears in the
// class sets. Classes are dense integer indices per level, in file order;
// names are full slash-joined paths and matter for I/O only.
class TaxonomyTree {
 public:
  /// Parses the taxonomy file format: one leaf per line as a full
  /// level-1..level-H path joined by '/'; '#' starts a comment line.
  /// Leaf order in the file defines fine-class index order.
  static TaxonomyTree parse(const std::string& text);

  /// Inverse of parse: one leaf path per line, LF endings.
  std::string to_text() const;

  int num_levels() const { return num_levels_; }
  int classes_at(int level) const;
  int num_fine() const { return classes_at(num_levels_); }

  /// Full path of a class, e.g. "A/A1" for a level-2 node.
  const std::string& class_name(int level, int index) const;

  /// Index (at level-1) of the parent of a node at `level` >= 2.
  int parent_of(int level, int index) const;

  /// Indices at level+1 of the children of a node at `level` < H.
  const std::vector<int>& children_of(int level, int index) const;

  /// Level-h ancestor of a fine class; identity when h == H.
  int coarse_label(int fine, int level) const;

  /// Edge count from a leaf up to the lowest common ancestor of a and b;
  /// 0 iff a == b. Both leaves sit at depth H, so the distance is shared.
  int lca_distance(int a, int b) const;

  /// Fine-class index of a full leaf path, or -1 if absent.
  int fine_index(const std::string& path) const;

  bool operator==(const TaxonomyTree& other) const;

 private:
  int num_levels_ = 0;
  // [level-1][index] -> full path
  std::vector<std::vector<std::string>> names_;
  // [level-1][index] -> parent index at level-1 (level 1 rows hold -1)
  std::vector<std::vector<int>> parents_;
  // [level-1][index] -> child indices at level+1 (empty vectors at level H)
  std::vector<std::vector<std::vector<int>>> children_;
  // ancestor_(level-1, fine) -> level-h ancestor index; row H-1 is identity
  Eigen::MatrixXi ancestor_;

  void check_level(int level) const;
  void check_fine(int index) const;
};

LcaMatrix build_lca_matrix(const TaxonomyTree& tree);

}  // namespace haf
