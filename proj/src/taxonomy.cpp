#include "haf/taxonomy.hpp"

#include <map>
#include <sstream>

namespace haf {

namespace {

std::vector<std::string> split_path(const std::string& line, int line_no) {
  if (!line.empty() && line.back() == '/') {
    // getline drops a trailing empty token, so catch it up front.
    throw Error(ErrorCode::MalformedPath,
                "empty path segment on line " + std::to_string(line_no));
  }
  std::vector<std::string> parts;
  std::string part;
  std::stringstream ss(line);
  while (std::getline(ss, part, '/')) {
    if (part.empty()) {
      throw Error(ErrorCode::MalformedPath,
                  "empty path segment on line " + std::to_string(line_no));
    }
    parts.push_back(part);
  }
  if (parts.empty()) {
    throw Error(ErrorCode::MalformedPath,
                "empty path on line " + std::to_string(line_no));
  }
  return parts;
}

}  // namespace

TaxonomyTree TaxonomyTree::parse(const std::string& text) {
  std::vector<std::vector<std::string>> leaf_paths;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    leaf_paths.push_back(split_path(line, line_no));
  }
  if (leaf_paths.empty()) {
    throw Error(ErrorCode::EmptyFile, "taxonomy file has no leaf lines");
  }

  const int depth = static_cast<int>(leaf_paths.front().size());
  for (std::size_t i = 1; i < leaf_paths.size(); ++i) {
    if (static_cast<int>(leaf_paths[i].size()) != depth) {
      throw Error(ErrorCode::NonUniformDepth,
                  "leaf " + std::to_string(i + 1) + " has depth " +
                      std::to_string(leaf_paths[i].size()) + ", expected " +
                      std::to_string(depth));
    }
  }

  TaxonomyTree tree;
  tree.num_levels_ = depth;
  tree.names_.resize(depth);
  tree.parents_.resize(depth);
  tree.children_.resize(depth);

  // Nodes are keyed by full path prefix, so equal display names under
  // different parents stay distinct classes.
  std::vector<std::map<std::string, int>> index_of(depth);
  for (const auto& parts : leaf_paths) {
    std::string prefix;
    int parent = -1;
    for (int level = 1; level <= depth; ++level) {
      if (level > 1) prefix += '/';
      prefix += parts[level - 1];
      auto& level_map = index_of[level - 1];
      auto it = level_map.find(prefix);
      int idx;
      if (it == level_map.end()) {
        idx = static_cast<int>(tree.names_[level - 1].size());
        level_map.emplace(prefix, idx);
        tree.names_[level - 1].push_back(prefix);
        tree.parents_[level - 1].push_back(parent);
        tree.children_[level - 1].emplace_back();
        if (level > 1) tree.children_[level - 2][parent].push_back(idx);
      } else {
        idx = it->second;
        if (level == depth) {
          throw Error(ErrorCode::DuplicateLeaf, "duplicate leaf path " + prefix);
        }
      }
      parent = idx;
    }
  }

  const int fine = tree.num_fine();
  tree.ancestor_.resize(depth, fine);
  for (int f = 0; f < fine; ++f) {
    int node = f;
    for (int level = depth; level >= 1; --level) {
      tree.ancestor_(level - 1, f) = node;
      node = tree.parents_[level - 1][node];
    }
  }
  return tree;
}

std::string TaxonomyTree::to_text() const {
  std::string out;
  for (const auto& path : names_[num_levels_ - 1]) {
    out += path;
    out += '\n';
  }
  return out;
}

int TaxonomyTree::classes_at(int level) const {
  check_level(level);
  return static_cast<int>(names_[level - 1].size());
}

const std::string& TaxonomyTree::class_name(int level, int index) const {
  check_level(level);
  if (index < 0 || index >= static_cast<int>(names_[level - 1].size())) {
    throw Error(ErrorCode::IndexOutOfRange,
                "class " + std::to_string(index) + " at level " +
                    std::to_string(level));
  }
  return names_[level - 1][index];
}

int TaxonomyTree::parent_of(int level, int index) const {
  check_level(level);
  if (level < 2) {
    throw Error(ErrorCode::LevelOutOfRange, "level-1 nodes have the implicit root parent");
  }
  if (index < 0 || index >= static_cast<int>(parents_[level - 1].size())) {
    throw Error(ErrorCode::IndexOutOfRange, "node " + std::to_string(index));
  }
  return parents_[level - 1][index];
}

const std::vector<int>& TaxonomyTree::children_of(int level, int index) const {
  check_level(level);
  if (index < 0 || index >= static_cast<int>(children_[level - 1].size())) {
    throw Error(ErrorCode::IndexOutOfRange, "node " + std::to_string(index));
  }
  return children_[level - 1][index];
}

int TaxonomyTree::coarse_label(int fine, int level) const {
  check_level(level);
  check_fine(fine);
  return ancestor_(level - 1, fine);
}

int TaxonomyTree::lca_distance(int a, int b) const {
  check_fine(a);
  check_fine(b);
  if (a == b) return 0;
  for (int level = num_levels_ - 1; level >= 1; --level) {
    if (ancestor_(level - 1, a) == ancestor_(level - 1, b)) {
      return num_levels_ - level;
    }
  }
  return num_levels_;  // shared ancestor is the root
}

int TaxonomyTree::fine_index(const std::string& path) const {
  const auto& leaves = names_[num_levels_ - 1];
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i] == path) return static_cast<int>(i);
  }
  return -1;
}

bool TaxonomyTree::operator==(const TaxonomyTree& other) const {
  return num_levels_ == other.num_levels_ && names_ == other.names_ &&
         parents_ == other.parents_;
}

void TaxonomyTree::check_level(int level) const {
  if (level < 1 || level > num_levels_) {
    throw Error(ErrorCode::LevelOutOfRange,
                "level " + std::to_string(level) + " not in [1, " +
                    std::to_string(num_levels_) + "]");
  }
}

void TaxonomyTree::check_fine(int index) const {
  if (index < 0 || index >= num_fine()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "fine class " + std::to_string(index));
  }
}

LcaMatrix build_lca_matrix(const TaxonomyTree& tree) {
  const int n = tree.num_fine();
  LcaMatrix dist(n, n);
  for (int a = 0; a < n; ++a) {
    dist(a, a) = 0;
    for (int b = a + 1; b < n; ++b) {
      const int d = tree.lca_distance(a, b);
      dist(a, b) = d;
      dist(b, a) = d;
    }
  }
  return dist;
}

}  // namespace haf
