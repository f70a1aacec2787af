#include "delta/core.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "delta/error.h"

namespace delta {
namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw Error(ErrorCode::kInvalidLogits,
                  std::string(what) + " entry " + std::to_string(i) + " is not finite");
    }
  }
}

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kVocabMismatch,
                "vector lengths " + std::to_string(a) + " and " + std::to_string(b));
  }
}

}  // namespace

uint64_t hash_string(std::string_view s) noexcept {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

LogitVector::LogitVector(std::vector<double> scores) : scores_(std::move(scores)) {
  require_finite(scores_, "logit");
}

DeltaLogits::DeltaLogits(std::vector<double> delta) : delta_(std::move(delta)) {
  require_finite(delta_, "delta");
}

double DeltaLogits::l2_norm() const {
  double sum = 0.0;
  for (double d : delta_) sum += d * d;
  return std::sqrt(sum);
}

double DeltaLogits::dot(std::span<const double> other) const {
  require_same_size(delta_.size(), other.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < delta_.size(); ++i) sum += delta_[i] * other[i];
  return sum;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!std::isfinite(probs_[i]) || probs_[i] < 0.0) {
      throw Error(ErrorCode::kInvalidDistribution,
                  "probability " + std::to_string(i) + " is negative or not finite");
    }
    sum += probs_[i];
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw Error(ErrorCode::kInvalidDistribution,
                "probabilities sum to " + std::to_string(sum));
  }
}

std::vector<TokenId> Distribution::support() const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (probs_[i] > 0.0) out.push_back(static_cast<TokenId>(i));
  }
  return out;
}

void DecodeConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidConfig, "lambda must be finite and >= 0");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidConfig, "temperature must be > 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "top_p must lie in (0, 1]");
  }
  if (max_tokens < 1) {
    throw Error(ErrorCode::kInvalidConfig, "max_tokens must be >= 1");
  }
}

std::string to_string(DecodeMode mode) {
  return mode == DecodeMode::kGreedy ? "greedy" : "sample";
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "sample") return DecodeMode::kSample;
  throw Error(ErrorCode::kInvalidConfig, "unknown decode mode '" + s + "'");
}

DeltaLogits delta_logits(const LogitVector& expert, const LogitVector& expert_base) {
  require_same_size(expert.size(), expert_base.size());
  std::vector<double> out(expert.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = expert[i] - expert_base[i];
  return DeltaLogits(std::move(out));
}

LogitVector combine_logits(const LogitVector& base, const LogitVector& expert,
                           const LogitVector& expert_base, double lambda) {
  require_same_size(base.size(), expert.size());
  require_same_size(base.size(), expert_base.size());
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidConfig, "lambda must be finite and >= 0");
  }
  if (lambda == 0.0) return base;
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = base[i] + lambda * (expert[i] - expert_base[i]);
  }
  return LogitVector(std::move(out));
}

LogitVector combine_logits(const LogitVector& base, const DeltaLogits& delta,
                           double lambda) {
  require_same_size(base.size(), delta.size());
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidConfig, "lambda must be finite and >= 0");
  }
  if (lambda == 0.0) return base;
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = base[i] + lambda * delta[i];
  return LogitVector(std::move(out));
}

Distribution softmax_with_temperature(const LogitVector& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidConfig, "temperature must be > 0");
  }
  if (logits.empty()) {
    throw Error(ErrorCode::kInvalidLogits, "empty logit vector");
  }
  const std::size_t n = logits.size();
  std::vector<double> probs(n);
  double max_scaled = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = logits[i] / temperature;
    max_scaled = std::max(max_scaled, probs[i]);
  }
  double sum = 0.0;
  for (double& p : probs) {
    p = std::exp(p - max_scaled);
    sum += p;
  }
  for (double& p : probs) p /= sum;
  return Distribution(std::move(probs));
}

Distribution nucleus_filter(const Distribution& dist, double top_p) {
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "top_p must lie in (0, 1]");
  }
  if (top_p >= 1.0) return dist;

  const auto probs = dist.probs();
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](TokenId a, TokenId b) { return probs[a] > probs[b]; });

  std::size_t kept = 0;
  double mass = 0.0;
  while (kept < order.size()) {
    mass += probs[order[kept]];
    ++kept;
    if (mass >= top_p) break;
  }

  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t i = 0; i < kept; ++i) out[order[i]] = probs[order[i]] / mass;
  return Distribution(std::move(out));
}

TokenId argmax_token(std::span<const double> scores) {
  TokenId best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<TokenId>(i);
  }
  return best;
}

TokenId sample_token(const Distribution& dist, RandomStream& rng) {
  const auto probs = dist.probs();
  double total = 0.0;
  TokenId last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    total += probs[i];
    if (probs[i] > 0.0) last_positive = static_cast<TokenId>(i);
  }
  if (last_positive < 0) {
    throw Error(ErrorCode::kInvalidDistribution, "all-zero distribution");
  }
  const double target = rng.next_unit() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    if (target < cumulative) return static_cast<TokenId>(i);
  }
  // Rounding can leave target just above the final cumulative sum.
  return last_positive;
}

double kl_divergence(const Distribution& p, const Distribution& q, double floor) {
  require_same_size(p.size(), q.size());
  std::size_t floored = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0 && q[i] <= 0.0) ++floored;
  }
  const double q_scale = 1.0 / (1.0 + static_cast<double>(floored) * floor);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = q[i] > 0.0 ? q[i] : floor;
    if (floored > 0) qi *= q_scale;
    kl += p[i] * std::log(p[i] / qi);
  }
  // Gibbs' inequality holds exactly; clamp accumulated rounding below zero.
  return std::max(kl, 0.0);
}

}  // namespace delta
