#include "haf/gradcheck.hpp"

#include <utility>

#include "haf/dataset.hpp"
#include "haf/losses.hpp"
#include "haf/model.hpp"
#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"
#include "haf/trainer.hpp"

namespace haf {

namespace {

struct ParamGroup {
  std::string name;
  int offset;
  int size;
};

std::vector<ParamGroup> param_groups(const ClassifierStack& stack) {
  std::vector<ParamGroup> groups;
  int offset = 0;
  for (std::size_t l = 0; l < stack.mlp.size(); ++l) {
    const int w = static_cast<int>(stack.mlp[l].weight.size());
    groups.push_back({"mlp[" + std::to_string(l) + "].W", offset, w});
    offset += w;
    const int b = static_cast<int>(stack.mlp[l].bias.size());
    groups.push_back({"mlp[" + std::to_string(l) + "].b", offset, b});
    offset += b;
  }
  for (std::size_t h = 0; h < stack.heads.size(); ++h) {
    const int s = static_cast<int>(stack.heads[h].size());
    groups.push_back({"head[" + std::to_string(h + 1) + "]", offset, s});
    offset += s;
  }
  return groups;
}

struct Toy {
  TaxonomyTree tree;
  ClassifierStack stack;
  Matrix inputs;
  std::vector<int> labels;
  PairBatch pairs;
};

Toy random_toy(Rng& rng) {
  const int levels = 2 + static_cast<int>(rng.bounded(2));
  std::vector<int> branching;
  branching.push_back(2 + static_cast<int>(rng.bounded(2)));
  if (levels == 2) {
    branching.push_back(1 + static_cast<int>(rng.bounded(3)));
  } else {
    branching.push_back(1 + static_cast<int>(rng.bounded(2)));
    branching.push_back(1 + static_cast<int>(rng.bounded(3)));
  }
  Toy toy;
  toy.tree = branching_tree(branching);

  const int input_dim = 2 + static_cast<int>(rng.bounded(3));
  std::vector<int> mlp_dims;
  if (rng.bounded(2) == 1) mlp_dims.push_back(3 + static_cast<int>(rng.bounded(3)));
  toy.stack = ClassifierStack::random(toy.tree, input_dim, mlp_dims, rng);

  const int batch = 3 + static_cast<int>(rng.bounded(4));
  toy.inputs.resize(batch, input_dim);
  toy.labels.resize(batch);
  for (int i = 0; i < batch; ++i) {
    toy.inputs.row(i) = rng.gaussian_vector(input_dim).transpose();
    toy.labels[i] = static_cast<int>(rng.bounded(toy.tree.num_fine()));
  }
  toy.pairs = sample_pairs(rng, toy.labels, toy.tree, 1, 4);
  return toy;
}

LossFlags flags_for(const std::string& loss_name) {
  LossFlags f{false, false, false, false};
  if (loss_name == "ce_fine" || loss_name == "total") f.ce_fine = true;
  if (loss_name == "shc" || loss_name == "total") f.shc = true;
  if (loss_name == "margin" || loss_name == "total") f.margin = true;
  if (loss_name == "gc" || loss_name == "total") f.gc = true;
  return f;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(int trials, double eps, double tol,
                                        std::uint64_t seed,
                                        const std::string& corrupt_loss) {
  const double kMargin = 3.0;
  const std::vector<std::string> losses = {"ce_fine", "shc", "margin", "gc",
                                           "total"};
  std::vector<GradCheckRow> rows;
  for (const auto& name : losses) {
    GradCheckRow row;
    row.loss_name = name;
    const LossFlags flags = flags_for(name);
    Rng rng(seed);
    for (int t = 0; t < trials; ++t) {
      const Toy toy = random_toy(rng);
      const Vector p0 = toy.stack.to_vector();

      auto value_at = [&](const Vector& v) {
        ClassifierStack s = toy.stack;
        s.from_vector(v);
        const ForwardTrace trace = forward(s, toy.inputs);
        return total_loss(toy.tree, s, trace, toy.labels, toy.pairs, flags,
                          kMargin)
            .total;
      };

      const ForwardTrace trace = forward(toy.stack, toy.inputs);
      const LossBreakdown lb = total_loss(toy.tree, toy.stack, trace,
                                          toy.labels, toy.pairs, flags, kMargin);
      ParamGrads grads = backward(toy.stack, trace, lb.dlogits);
      for (std::size_t h = 0; h < grads.heads.size(); ++h) {
        grads.heads[h] += lb.dheads[h];
      }
      Vector analytic = grads.to_vector();
      if (name == corrupt_loss) analytic[0] += 0.5;

      const Vector fd = finite_diff_grad(value_at, p0, eps);
      for (const auto& group : param_groups(toy.stack)) {
        const double err =
            gradient_rel_error(analytic.segment(group.offset, group.size),
                               fd.segment(group.offset, group.size));
        if (err > row.max_rel_err) {
          row.max_rel_err = err;
          row.worst_group = group.name;
        }
      }
    }
    row.pass = row.max_rel_err < tol;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace haf
