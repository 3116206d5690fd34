#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "haf/losses.hpp"
#include "haf/model.hpp"
#include "haf/numeric.hpp"
#include "haf/taxonomy.hpp"
#include "haf/trainer.hpp"
#include "test_util.hpp"

using haf::ClassifierStack;
using haf::ErrorCode;
using haf::LevelPredictions;
using haf::LossFlags;
using haf::Matrix;
using haf::PairBatch;
using haf::Rng;
using haf::TaxonomyTree;
using haf::Vector;
using haf_test::thrown_code;

namespace {

const double kLn2 = std::log(2.0);

TaxonomyTree small_tree() { return TaxonomyTree::parse("A/A1\nA/A2\nB/B1\n"); }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector random_simplex(Rng& rng, int n) {
  return haf::softmax(rng.gaussian_vector(n));
}

// KL divergence with the same floor-and-skip conventions as the library,
// written independently as an oracle.
double kl(const Vector& a, const Vector& b) {
  double v = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) v += a[i] * (haf::safe_log(a[i]) - haf::safe_log(b[i]));
  }
  return v;
}

}  // namespace

TEST_CASE("fine cross-entropy is the negative log of the true class") {
  LevelPredictions preds;
  preds.probs = {vec({0.5, 0.5}), vec({0.5, 0.25, 0.25})};
  preds.logits = preds.probs;
  const auto ce = haf::ce_fine(preds, 0);
  CHECK(ce.value == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(ce.dlogits.size() == 3);
  CHECK(ce.dlogits[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(ce.dlogits[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(ce.dlogits[2] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(thrown_code([&] { haf::ce_fine(preds, 5); }) ==
        ErrorCode::IndexOutOfRange);
  CHECK(thrown_code([&] { haf::ce_fine(preds, -1); }) ==
        ErrorCode::IndexOutOfRange);
}

TEST_CASE("soft labels aggregate child probabilities") {
  const auto tree = small_tree();
  LevelPredictions preds;
  preds.probs = {vec({0.9, 0.1}), vec({0.2, 0.3, 0.5})};
  const auto soft = haf::build_soft_labels(tree, preds);
  REQUIRE(soft.size() == 1);
  CHECK(soft[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(soft[0][1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("soft labels stay on the simplex for random inputs") {
  const auto tree = TaxonomyTree::parse("A/A1/x\nA/A1/y\nA/A2/z\nB/B1/u\nB/B1/v\nB/B2/w\n");
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    LevelPredictions preds;
    for (int h = 1; h <= 3; ++h) {
      preds.probs.push_back(random_simplex(rng, tree.classes_at(h)));
    }
    const auto soft = haf::build_soft_labels(tree, preds);
    REQUIRE(soft.size() == 2);
    for (const auto& level : soft) {
      CHECK(std::abs(level.sum() - 1.0) <= 1e-12);
      CHECK(level.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("single-child classes make aggregation a reordering") {
  const auto tree = TaxonomyTree::parse("A/A1\nB/B1\n");
  LevelPredictions preds;
  preds.probs = {vec({0.5, 0.5}), vec({0.7, 0.3})};
  const auto soft = haf::build_soft_labels(tree, preds);
  CHECK(soft[0] == preds.probs[1]);
}

TEST_CASE("jsd frozen values, symmetry and bounds") {
  CHECK(haf::jsd(vec({0.2, 0.8}), vec({0.2, 0.8})).value == 0.0);
  CHECK(haf::jsd(vec({1.0, 0.0}), vec({0.0, 1.0})).value ==
        doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(haf::jsd(vec({1.0, 0.0}), vec({0.5, 0.5})).value ==
        doctest::Approx(0.215762).epsilon(1e-5));
  CHECK(std::abs(haf::jsd(vec({1.0, 0.0}), vec({0.5, 0.5})).value -
                 0.215762) < 1e-6);

  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.bounded(6));
    const Vector p = random_simplex(rng, n);
    const Vector q = random_simplex(rng, n);
    const double pq = haf::jsd(p, q).value;
    const double qp = haf::jsd(q, p).value;
    CHECK(std::abs(pq - qp) <= 1e-12);
    CHECK(pq >= 0.0);
    CHECK(pq <= kLn2 + 1e-12);

    const Vector m = 0.5 * (p + q);
    const double oracle = 0.5 * kl(p, m) + 0.5 * kl(q, m);
    CHECK(std::abs(pq - oracle) <= 1e-12);
  }

  CHECK(thrown_code([] { haf::jsd(Vector::Ones(2), Vector::Ones(3)); }) ==
        ErrorCode::LengthMismatch);
}

TEST_CASE("jsd gradients chain through softmax correctly") {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.bounded(4));
    const Vector lp = rng.gaussian_vector(n);
    const Vector q = random_simplex(rng, n);
    const Vector p = haf::softmax(lp);

    const Vector analytic_p = haf::softmax_backward(p, haf::jsd(p, q).dp);
    const Vector numeric_p = haf::finite_diff_grad(
        [&](const Vector& z) { return haf::jsd(haf::softmax(z), q).value; },
        lp, 1e-6);
    CHECK(haf::gradient_rel_error(analytic_p, numeric_p) < 1e-7);

    const Vector lq = rng.gaussian_vector(n);
    const Vector qq = haf::softmax(lq);
    const Vector analytic_q = haf::softmax_backward(qq, haf::jsd(p, qq).dq);
    const Vector numeric_q = haf::finite_diff_grad(
        [&](const Vector& z) { return haf::jsd(p, haf::softmax(z)).value; },
        lq, 1e-6);
    CHECK(haf::gradient_rel_error(analytic_q, numeric_q) < 1e-7);
  }
}

TEST_CASE("shc vanishes when levels agree and hits ln 2 when disjoint") {
  SUBCASE("consistent predictions") {
    const auto tree = small_tree();
    LevelPredictions preds;
    preds.probs = {vec({0.5, 0.5}), vec({0.2, 0.3, 0.5})};
    const auto shc = haf::shc_loss(tree, preds);
    CHECK(shc.value == 0.0);
    for (const auto& d : shc.dlogits) CHECK(d.norm() == 0.0);
  }
  SUBCASE("maximally inconsistent predictions") {
    const auto tree = TaxonomyTree::parse("A/A1\nB/B1\n");
    LevelPredictions preds;
    preds.probs = {vec({1.0, 0.0}), vec({0.0, 1.0})};
    const auto shc = haf::shc_loss(tree, preds);
    CHECK(shc.value == doctest::Approx(kLn2).epsilon(1e-12));
  }
  SUBCASE("three levels sum their pairwise terms") {
    const auto tree = TaxonomyTree::parse("A/A1/x\nA/A1/y\nB/B1/z\n");
    Rng rng(31);
    LevelPredictions preds;
    for (int h = 1; h <= 3; ++h)
      preds.probs.push_back(random_simplex(rng, tree.classes_at(h)));
    const auto soft = haf::build_soft_labels(tree, preds);
    const double expected = haf::jsd(preds.probs[0], soft[0]).value +
                            haf::jsd(preds.probs[1], soft[1]).value;
    CHECK(haf::shc_loss(tree, preds).value ==
          doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("margin loss hinges on jsd between paired samples") {
  haf::ForwardTrace trace;
  trace.input = Matrix::Zero(2, 1);
  Matrix coarse(2, 2), fine(2, 3);
  coarse << 1.0, 0.0, 0.5, 0.5;
  fine << 0.6, 0.2, 0.2, 0.1, 0.8, 0.1;
  trace.probs = {coarse, fine};

  PairBatch pairs;
  pairs.per_level.resize(1);

  SUBCASE("frozen pair value") {
    pairs.per_level[0] = {{0, 1}};
    const auto res = haf::margin_loss(trace, pairs, 3.0);
    CHECK(res.value == doctest::Approx(2.784238).epsilon(1e-5));
    CHECK(std::abs(res.value - 2.784238) < 1e-6);
    CHECK_FALSE(res.empty_pair_batch);
    // Row 0 sits on a simplex vertex, where the softmax Jacobian vanishes.
    CHECK(res.dlogits[0].row(0).norm() == 0.0);
    CHECK(res.dlogits[0].row(1).norm() > 0.0);
    CHECK(res.dlogits[1].norm() == 0.0);  // fine level carries no pairs
  }
  SUBCASE("identical distributions contribute the margin itself") {
    pairs.per_level[0] = {{0, 0}};
    const auto res = haf::margin_loss(trace, pairs, 3.0);
    CHECK(res.value == 3.0);
  }
  SUBCASE("pairs are averaged") {
    pairs.per_level[0] = {{0, 1}, {0, 0}};
    const auto res = haf::margin_loss(trace, pairs, 3.0);
    const double single =
        3.0 - haf::jsd(coarse.row(0).transpose(), coarse.row(1).transpose())
                  .value;
    CHECK(res.value == doctest::Approx((single + 3.0) / 2.0).epsilon(1e-14));
  }
  SUBCASE("inactive hinge contributes nothing") {
    pairs.per_level[0] = {{0, 1}};
    const auto res = haf::margin_loss(trace, pairs, 0.1);
    CHECK(res.value == 0.0);
    CHECK(res.dlogits[0].norm() == 0.0);
  }
  SUBCASE("empty pair batch is flagged, not fatal") {
    const auto res = haf::margin_loss(trace, pairs, 3.0);
    CHECK(res.empty_pair_batch);
    CHECK(res.value == 0.0);
    CHECK(res.dlogits[0].rows() == 2);
    CHECK(res.dlogits[0].norm() == 0.0);
  }
  SUBCASE("pair indices outside the batch throw") {
    pairs.per_level[0] = {{0, 5}};
    CHECK(thrown_code([&] { haf::margin_loss(trace, pairs, 3.0); }) ==
          ErrorCode::IndexOutOfRange);
  }
}

TEST_CASE("geometric consistency compares coarse rows with child sums") {
  const auto tree = small_tree();
  ClassifierStack stack;
  stack.input_dim = 2;
  stack.feature_dim = 2;
  stack.heads.resize(2);
  stack.heads[0] = Matrix(2, 2);
  stack.heads[0] << 1.0, 0.0, 1.0, 0.0;
  stack.heads[1] = Matrix(3, 2);
  stack.heads[1] << 1.0, 0.0, 0.0, 1.0, 1.0, 0.0;

  SUBCASE("frozen value") {
    const auto gc = haf::gc_loss(tree, stack);
    CHECK(gc.value ==
          doctest::Approx(1.0 - std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(gc.dheads[0].rows() == 2);
    CHECK(gc.dheads[1].rows() == 3);
    // B's row and its single child already align, so only A's block moves.
    CHECK(gc.dheads[0].row(1).norm() == doctest::Approx(0.0));
    CHECK(gc.dheads[1].row(2).norm() == doctest::Approx(0.0));
  }
  SUBCASE("perfect alignment gives zero") {
    stack.heads[0].row(0) = vec({1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)})
                                .transpose();
    const auto gc = haf::gc_loss(tree, stack);
    CHECK(gc.value == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("cancelling children throw DegenerateChildSum") {
    stack.heads[1].row(1) = vec({-1.0, 0.0}).transpose();
    CHECK(thrown_code([&] { haf::gc_loss(tree, stack); }) ==
          ErrorCode::DegenerateChildSum);
  }
  SUBCASE("zero coarse row throws ZeroWeightRow") {
    stack.heads[0].row(0).setZero();
    CHECK(thrown_code([&] { haf::gc_loss(tree, stack); }) ==
          ErrorCode::ZeroWeightRow);
  }
}

TEST_CASE("gc gradients match finite differences") {
  const auto tree = TaxonomyTree::parse("A/A1\nA/A2\nB/B1\nB/B2\n");
  Rng rng(37);
  ClassifierStack stack = ClassifierStack::random(tree, 3, {}, rng);
  const Vector x0 = stack.to_vector();

  const auto gc = haf::gc_loss(tree, stack);
  auto grads = haf::ParamGrads::zeros_like(stack);
  grads.heads = gc.dheads;

  const Vector numeric = haf::finite_diff_grad(
      [&](const Vector& params) {
        ClassifierStack probe = stack;
        probe.from_vector(params);
        return haf::gc_loss(tree, probe).value;
      },
      x0, 1e-6);
  CHECK(haf::gradient_rel_error(grads.to_vector(), numeric) < 1e-7);
}

TEST_CASE("total loss is the exact sum of its enabled terms") {
  const auto tree = small_tree();
  Rng rng(41);
  const auto stack = ClassifierStack::random(tree, 4, {5}, rng);
  Matrix batch(6, 4);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) batch(i, j) = rng.gaussian();
  const std::vector<int> y = {0, 1, 2, 0, 2, 1};
  const auto trace = haf::forward(stack, batch);
  const PairBatch pairs = haf::sample_pairs(rng, y, tree, 1, 4);
  REQUIRE(pairs.total() > 0);

  std::vector<haf::LossBreakdown> runs;
  for (int mask = 0; mask < 16; ++mask) {
    LossFlags flags;
    flags.ce_fine = mask & 1;
    flags.shc = mask & 2;
    flags.margin = mask & 4;
    flags.gc = mask & 8;
    runs.push_back(haf::total_loss(tree, stack, trace, y, pairs, flags, 3.0));
  }

  const auto& full = runs[15];
  CHECK(full.ce_fine > 0.0);
  CHECK(full.shc > 0.0);
  CHECK(full.margin > 0.0);
  CHECK(full.gc > 0.0);

  for (int mask = 0; mask < 16; ++mask) {
    const auto& r = runs[mask];
    // Disabled slots are exactly zero, enabled slots match every other
    // configuration bitwise, and the total is the left-to-right sum.
    CHECK(r.ce_fine == ((mask & 1) ? full.ce_fine : 0.0));
    CHECK(r.shc == ((mask & 2) ? full.shc : 0.0));
    CHECK(r.margin == ((mask & 4) ? full.margin : 0.0));
    CHECK(r.gc == ((mask & 8) ? full.gc : 0.0));
    CHECK(r.total == r.ce_fine + r.shc + r.margin + r.gc);
  }
  CHECK(runs[0].total == 0.0);
}

TEST_CASE("total loss validates its batch") {
  const auto tree = small_tree();
  Rng rng(43);
  const auto stack = ClassifierStack::random(tree, 2, {}, rng);
  haf::ForwardTrace empty_trace;
  empty_trace.input = Matrix::Zero(0, 2);
  PairBatch pairs;
  pairs.per_level.resize(1);
  CHECK(thrown_code([&] {
          haf::total_loss(tree, stack, empty_trace, {}, pairs, LossFlags{}, 3.0);
        }) == ErrorCode::InvalidConfig);

  Matrix batch = Matrix::Zero(2, 2);
  const auto trace = haf::forward(stack, batch);
  CHECK(thrown_code([&] {
          haf::total_loss(tree, stack, trace, {0, 1, 2}, pairs, LossFlags{}, 3.0);
        }) == ErrorCode::LengthMismatch);
}

TEST_CASE("hxe frozen values") {
  const auto tree = small_tree();
  const Vector p = vec({0.2, 0.3, 0.5});
  SUBCASE("alpha zero telescopes to fine cross-entropy") {
    CHECK(haf::hxe_loss(tree, p, 0, 0.0) ==
          doctest::Approx(-std::log(0.2)).epsilon(1e-12));
    CHECK(haf::hxe_loss(tree, p, 2, 0.0) ==
          doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  }
  SUBCASE("alpha discounts coarse levels") {
    const double alpha = 0.7;
    // l = 0 at the fine level: conditional 0.2/0.5; l = 1: conditional 0.5.
    const double expected =
        -std::log(0.4) + std::exp(-alpha) * -std::log(0.5);
    CHECK(haf::hxe_loss(tree, p, 0, alpha) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("argument validation") {
    CHECK(thrown_code([&] { haf::hxe_loss(tree, Vector::Ones(2), 0, 0.0); }) ==
          ErrorCode::LengthMismatch);
    CHECK(thrown_code([&] { haf::hxe_loss(tree, p, 3, 0.0); }) ==
          ErrorCode::IndexOutOfRange);
  }
}

TEST_CASE("hxe equals the weighted sum of path conditionals") {
  // Independent oracle: marginals from explicit leaf enumeration via
  // children_of, ancestors from the parent chain.
  const std::vector<std::string> trees = {
      "A/A1\nA/A2\nB/B1\n",
      "A/A1/x\nA/A1/y\nA/A2/z\nB/B1/u\nB/B2/v\n",
      "r/s/t/a\nr/s/t/b\nr/s/u/c\nr/v/w/d\nq/z/z/e\n",
  };
  Rng rng(47);
  for (const auto& text : trees) {
    const auto tree = TaxonomyTree::parse(text);
    const int levels = tree.num_levels();
    const int fine = tree.num_fine();

    std::function<void(int, int, std::vector<int>&)> collect =
        [&](int level, int idx, std::vector<int>& out) {
          if (level == levels) {
            out.push_back(idx);
            return;
          }
          for (int c : tree.children_of(level, idx)) collect(level + 1, c, out);
        };

    for (int trial = 0; trial < 40; ++trial) {
      const Vector p = random_simplex(rng, fine);
      const int y = static_cast<int>(rng.bounded(fine));
      const double alpha = 2.0 * rng.uniform();

      std::vector<int> ancestor(levels + 1, 0);
      ancestor[levels] = y;
      for (int h = levels; h >= 2; --h)
        ancestor[h - 1] = tree.parent_of(h, ancestor[h]);

      std::vector<double> marginal(levels + 1, 1.0);
      for (int h = 1; h <= levels; ++h) {
        std::vector<int> leaves;
        collect(h, ancestor[h], leaves);
        double sum = 0.0;
        for (int f : leaves) sum += p[f];
        marginal[h] = sum;
      }
      double oracle = 0.0;
      for (int l = 0; l < levels; ++l) {
        const int child = levels - l;
        oracle += std::exp(-alpha * l) *
                  (std::log(marginal[child - 1]) - std::log(marginal[child]));
      }
      CHECK(std::abs(haf::hxe_loss(tree, p, y, alpha) - oracle) < 1e-10);
    }
  }
}
