#include "haf/dataset.hpp"

#include <cstdlib>
#include <sstream>
#include <string>

#include "haf/error.hpp"
#include "haf/io.hpp"

namespace haf {

TaxonomyTree branching_tree(const std::vector<int>& branching) {
  if (branching.empty()) {
    throw Error(ErrorCode::InvalidConfig, "branching_tree: empty branching");
  }
  for (int b : branching) {
    if (b < 1) {
      throw Error(ErrorCode::InvalidConfig,
                  "branching_tree: branching factors must be positive");
    }
  }
  std::vector<std::string> paths = {""};
  for (std::size_t level = 0; level < branching.size(); ++level) {
    std::vector<std::string> next;
    next.reserve(paths.size() * branching[level]);
    for (const auto& prefix : paths) {
      for (int c = 0; c < branching[level]; ++c) {
        next.push_back(prefix.empty() ? std::to_string(c)
                                      : prefix + "/" + std::to_string(c));
      }
    }
    paths = std::move(next);
  }
  std::string text;
  for (const auto& p : paths) {
    text += p;
    text += '\n';
  }
  return TaxonomyTree::parse(text);
}

static void validate_config(const TaxonomyTree& tree,
                            const SyntheticConfig& config) {
  if (config.input_dim < 1) {
    throw Error(ErrorCode::InvalidConfig, "generate: input_dim must be >= 1");
  }
  if (config.samples_per_class < 1) {
    throw Error(ErrorCode::InvalidConfig,
                "generate: samples_per_class must be >= 1");
  }
  if (static_cast<int>(config.level_spread.size()) != tree.num_levels()) {
    throw Error(ErrorCode::InvalidConfig,
                "generate: level_spread has " +
                    std::to_string(config.level_spread.size()) +
                    " entries for " + std::to_string(tree.num_levels()) +
                    " levels");
  }
  for (std::size_t h = 0; h < config.level_spread.size(); ++h) {
    if (!(config.level_spread[h] > 0.0)) {
      throw Error(ErrorCode::InvalidConfig,
                  "generate: level_spread entries must be positive");
    }
    if (h > 0 && !(config.level_spread[h] < config.level_spread[h - 1])) {
      throw Error(ErrorCode::InvalidConfig,
                  "generate: level_spread must be strictly decreasing "
                  "(coarse separations larger than fine ones)");
    }
  }
  if (config.noise_sigma < 0.0) {
    throw Error(ErrorCode::InvalidConfig,
                "generate: noise_sigma must be non-negative");
  }
}

std::pair<Dataset, Dataset> generate(const TaxonomyTree& tree,
                                     const SyntheticConfig& config) {
  validate_config(tree, config);
  const int levels = tree.num_levels();
  const int d = config.input_dim;
  Rng rng(config.seed);

  // Centers level by level, class by class; one RNG stream keeps the whole
  // dataset a pure function of the seed.
  std::vector<Matrix> centers(levels);
  for (int h = 1; h <= levels; ++h) {
    const int n = tree.classes_at(h);
    centers[h - 1].resize(n, d);
    for (int c = 0; c < n; ++c) {
      Vector offset = rng.gaussian_vector(d) * config.level_spread[h - 1];
      if (h == 1) {
        centers[h - 1].row(c) = offset.transpose();
      } else {
        centers[h - 1].row(c) =
            centers[h - 2].row(tree.parent_of(h, c)) + offset.transpose();
      }
    }
  }

  const int fine = tree.num_fine();
  const int per_class = config.samples_per_class;
  std::vector<double> train_rows, test_rows;
  std::vector<int> train_labels, test_labels;
  for (int c = 0; c < fine; ++c) {
    for (int s = 0; s < per_class; ++s) {
      Vector x = centers[levels - 1].row(c).transpose() +
                 rng.gaussian_vector(d) * config.noise_sigma;
      auto& rows = (s % 5 == 4) ? test_rows : train_rows;
      auto& labels = (s % 5 == 4) ? test_labels : train_labels;
      for (int j = 0; j < d; ++j) rows.push_back(x[j]);
      labels.push_back(c);
    }
  }

  auto pack = [d](const std::vector<double>& rows, std::vector<int> labels) {
    Dataset ds;
    ds.fine_labels = std::move(labels);
    ds.features.resize(static_cast<int>(ds.fine_labels.size()), d);
    for (int i = 0; i < ds.features.rows(); ++i) {
      for (int j = 0; j < d; ++j) ds.features(i, j) = rows[i * d + j];
    }
    return ds;
  };
  return {pack(train_rows, std::move(train_labels)),
          pack(test_rows, std::move(test_labels))};
}

std::string write_dataset(const Dataset& ds, const TaxonomyTree& tree) {
  const int d = static_cast<int>(ds.features.cols());
  std::string out;
  for (int j = 0; j < d; ++j) {
    out += "f" + std::to_string(j) + ",";
  }
  out += "label\n";
  for (int i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      out += format_double(ds.features(i, j));
      out += ',';
    }
    out += tree.class_name(tree.num_levels(), ds.fine_labels[i]);
    out += '\n';
  }
  return out;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field += ch;
    }
  }
  fields.push_back(field);
  return fields;
}

Dataset read_dataset(const std::string& text, const TaxonomyTree& tree) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::EmptyFile, "read_dataset: no header row");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header.back() != "label") {
    throw Error(ErrorCode::RaggedRow,
                "read_dataset: header must be f0,...,label");
  }
  const int d = static_cast<int>(header.size()) - 1;

  std::vector<double> rows;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != d + 1) {
      throw Error(ErrorCode::RaggedRow,
                  "read_dataset: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(d + 1));
    }
    for (int j = 0; j < d; ++j) {
      const char* begin = fields[j].c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin || *end != '\0') {
        throw Error(ErrorCode::NonNumericFeature,
                    "read_dataset: line " + std::to_string(line_no) +
                        " field " + std::to_string(j) + ": '" + fields[j] +
                        "'");
      }
      rows.push_back(v);
    }
    const int fine = tree.fine_index(fields[d]);
    if (fine < 0) {
      throw Error(ErrorCode::UnknownLabel,
                  "read_dataset: line " + std::to_string(line_no) +
                      ": label '" + fields[d] + "' not in taxonomy");
    }
    labels.push_back(fine);
  }

  Dataset ds;
  ds.fine_labels = std::move(labels);
  ds.features.resize(static_cast<int>(ds.fine_labels.size()), d);
  for (int i = 0; i < ds.features.rows(); ++i) {
    for (int j = 0; j < d; ++j) ds.features(i, j) = rows[i * d + j];
  }
  return ds;
}

}  // namespace haf
