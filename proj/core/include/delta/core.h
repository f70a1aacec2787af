#pragma once

// Numerical primitives for decoding-time logit arithmetic: combining a large
// base model's logits with the expert-minus-base delta of a small model pair,
// temperature softmax, nucleus filtering and token selection.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "delta/random.h"

namespace delta {

using TokenId = std::int32_t;

// Dense, finite per-token scores over a shared vocabulary.
class LogitVector {
 public:
  LogitVector() = default;
  // Throws kInvalidLogits if any entry is NaN or infinite.
  explicit LogitVector(std::vector<double> scores);

  std::size_t size() const noexcept { return scores_.size(); }
  bool empty() const noexcept { return scores_.empty(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  std::span<const double> scores() const noexcept { return scores_; }
  const std::vector<double>& values() const noexcept { return scores_; }

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> scores_;
};

// Expert-minus-base logit difference transferred at one step.
class DeltaLogits {
 public:
  DeltaLogits() = default;
  explicit DeltaLogits(std::vector<double> delta);

  std::size_t size() const noexcept { return delta_.size(); }
  double operator[](std::size_t i) const { return delta_[i]; }
  std::span<const double> values() const noexcept { return delta_; }

  double l2_norm() const;
  double dot(std::span<const double> other) const;

 private:
  std::vector<double> delta_;
};

// Normalized probabilities; sums to 1 within kNormTolerance.
class Distribution {
 public:
  static constexpr double kNormTolerance = 1e-9;

  Distribution() = default;
  // Throws kInvalidDistribution on negative/non-finite entries or a sum
  // outside the tolerance.
  explicit Distribution(std::vector<double> probs);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::vector<TokenId> support() const;

 private:
  std::vector<double> probs_;
};

enum class DecodeMode { kGreedy, kSample };

struct DecodeConfig {
  double lambda = 1.0;
  double temperature = 1.0;
  double top_p = 0.95;
  std::int64_t max_tokens = 16384;
  DecodeMode mode = DecodeMode::kSample;
  std::uint64_t seed = 0;

  // Throws kInvalidConfig when an invariant is violated.
  void validate() const;
};

std::string to_string(DecodeMode mode);
DecodeMode decode_mode_from_string(const std::string& s);

DeltaLogits delta_logits(const LogitVector& expert, const LogitVector& expert_base);

// base + lambda * (expert - expert_base). lambda == 0 returns base unchanged.
LogitVector combine_logits(const LogitVector& base, const LogitVector& expert,
                           const LogitVector& expert_base, double lambda);
LogitVector combine_logits(const LogitVector& base, const DeltaLogits& delta,
                           double lambda);

// Stabilized softmax of logits / temperature.
Distribution softmax_with_temperature(const LogitVector& logits, double temperature);

// Smallest highest-probability prefix whose mass reaches top_p, boundary
// token included, renormalized. Ties in probability keep the lower id first.
Distribution nucleus_filter(const Distribution& dist, double top_p);

// Index of the maximum; ties go to the lowest id. Precondition: non-empty.
TokenId argmax_token(std::span<const double> scores);
inline TokenId argmax_token(const LogitVector& logits) {
  return argmax_token(logits.scores());
}

// Categorical draw consuming exactly one value from the stream.
TokenId sample_token(const Distribution& dist, RandomStream& rng);

// KL(p || q) over p's support. Entries where q is zero but p is positive
// take the floor epsilon on q, after which q is renormalized.
double kl_divergence(const Distribution& p, const Distribution& q,
                     double floor = 1e-12);

}  // namespace delta
