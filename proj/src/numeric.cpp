#include "haf/numeric.hpp"

#include <cmath>

namespace haf {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonUniformDepth: return "NonUniformDepth";
    case ErrorCode::DuplicateLeaf: return "DuplicateLeaf";
    case ErrorCode::MalformedPath: return "MalformedPath";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::ZeroWeightRow: return "ZeroWeightRow";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateChildSum: return "DegenerateChildSum";
    case ErrorCode::RankListTooShort: return "RankListTooShort";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::NonNumericFeature: return "NonNumericFeature";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

Vector softmax(const Vector& logits) {
  if (!logits.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "softmax requires finite logits");
  }
  const double shift = logits.maxCoeff();
  Vector p = (logits.array() - shift).exp().matrix();
  p /= p.sum();
  return p;
}

Vector log_softmax(const Vector& logits) {
  if (!logits.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "log_softmax requires finite logits");
  }
  const double shift = logits.maxCoeff();
  const double log_sum = std::log((logits.array() - shift).exp().sum());
  return (logits.array() - shift - log_sum).matrix();
}

Vector softmax_backward(const Vector& probs, const Vector& dprobs) {
  if (probs.size() != dprobs.size()) {
    throw Error(ErrorCode::LengthMismatch, "softmax_backward size mismatch");
  }
  const double inner = probs.dot(dprobs);
  return (probs.array() * (dprobs.array() - inner)).matrix();
}

void row_l2_normalize(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double norm = m.row(r).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw Error(ErrorCode::ZeroWeightRow,
                  "cannot normalize row " + std::to_string(r));
    }
    // Already-normalized rows are left untouched so that projection is
    // bitwise idempotent (a zero-learning-rate step changes nothing).
    if (std::abs(norm - 1.0) < 1e-13) continue;
    m.row(r) /= norm;
  }
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double eps) {
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + eps;
    const double fp = f(probe);
    probe(i) = x(i) - eps;
    const double fm = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(ErrorCode::NonFiniteEvaluation,
                  "objective non-finite near coordinate " + std::to_string(i));
    }
    grad(i) = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double gradient_rel_error(const Vector& a, const Vector& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom < 1e-10) return 0.0;
  return (a - b).norm() / denom;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

std::uint64_t Rng::bounded(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "bounded(0)");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * scale;
  has_spare_ = true;
  return u * scale;
}

Vector Rng::gaussian_vector(int n) {
  Vector out(n);
  for (int i = 0; i < n; ++i) out(i) = gaussian();
  return out;
}

}  // namespace haf
