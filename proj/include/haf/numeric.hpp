#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>

#include "haf/error.hpp"

namespace haf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Probabilities are floored at this value inside every logarithm, so
// entropy-style losses stay finite even on (numerically) disjoint supports.
inline constexpr double kProbFloor = 1e-12;

inline double safe_log(double p) { return std::log(p < kProbFloor ? kProbFloor : p); }

/// Numerically stable softmax (max-subtraction). Throws NonFiniteInput.
Vector softmax(const Vector& logits);

Vector log_softmax(const Vector& logits);

/// Pulls a gradient w.r.t. probabilities back through softmax:
/// dlogits_k = p_k * (dprobs_k - <p, dprobs>).
Vector softmax_backward(const Vector& probs, const Vector& dprobs);

/// Normalizes each row of `m` to unit L2 norm in place. Throws ZeroWeightRow.
void row_l2_normalize(Matrix& m);

/// Central finite differences: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
/// Throws NonFiniteEvaluation if f produces a non-finite value.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double eps);

/// ||a - b|| / max(||a||, ||b||); 0 when both norms are below 1e-10.
double gradient_rel_error(const Vector& a, const Vector& b);

// Deterministic random generator: xoshiro256++ with the reference constants,
// seeded through splitmix64. Identical seeds give identical streams on every
// platform, which the training/data determinism contracts rely on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform integer in [0, n), rejection-sampled (no modulo bias).
  std::uint64_t bounded(std::uint64_t n);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via the Marsaglia polar method.
  double gaussian();

  Vector gaussian_vector(int n);

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace haf
