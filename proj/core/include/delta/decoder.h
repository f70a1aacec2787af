#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "delta/core.h"
#include "delta/scorer.h"

namespace delta {

struct StepRecord {
  TokenId token = 0;
  double chosen_logprob = 0.0;  // nats, under the post-nucleus distribution
  std::optional<double> kl_base_vs_combined;
  std::optional<double> delta_l2;
  std::optional<double> delta_dot_base;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class StopReason { kEos, kMaxTokens };

std::string to_string(StopReason reason);
StopReason stop_reason_from_string(const std::string& s);

struct ScorerLabels {
  std::string base;
  std::string expert;
  std::string expert_base;

  friend bool operator==(const ScorerLabels&, const ScorerLabels&) = default;
};

struct Trajectory {
  std::vector<TokenId> prompt_tokens;
  std::vector<StepRecord> generated;
  StopReason stop_reason = StopReason::kMaxTokens;
  DecodeConfig config_snapshot;
  ScorerLabels scorer_labels;

  std::vector<TokenId> tokens() const;
};

// The scorer triple. Transfer mode needs both expert and expert_base;
// with neither, base is decoded alone (baseline, or ceiling when base is the
// RL-tuned model).
struct ScorerSet {
  const Scorer* base = nullptr;
  const Scorer* expert = nullptr;
  const Scorer* expert_base = nullptr;
};

struct DecodeOptions {
  std::optional<TokenId> eos;
  bool record_kl = false;
  bool record_delta = false;
  // Query the three scorers concurrently within a step. Useful for remote
  // backends; results are identical either way.
  bool parallel_scoring = false;
  // Random stream is keyed by (config.seed, stream_key).
  std::uint64_t stream_key = 0;
};

// Generates until eos or config.max_tokens. At each step the logits are
// base + lambda * (expert - expert_base) (or base alone), then temperature
// softmax and nucleus filtering give the step distribution, from which the
// next token is the argmax (greedy) or a draw (sample). Scorer failures are
// rethrown as kScorer naming the step.
Trajectory decode(const ScorerSet& scorers, std::span<const TokenId> prompt,
                  const DecodeConfig& config, const DecodeOptions& options = {});

struct ReplayPair {
  TokenId predicted = 0;
  TokenId actual = 0;
};

// Teacher-forced greedy predictions of `probe` along the generated tokens:
// for i = 1..n-1, predicted_i = argmax probe(prompt ++ t_1..t_i) and
// actual_i = t_{i+1}. Throws kInsufficientTrajectory when n < 2.
std::vector<ReplayPair> replay_against(const Trajectory& trajectory, const Scorer& probe);

// Per-position deltas expert(x_<t) - expert_base(x_<t) along the generated
// tokens of a fixed reference trajectory.
std::vector<DeltaLogits> delta_series_along(const Trajectory& trajectory, const Scorer& expert,
                                            const Scorer& expert_base);

}  // namespace delta
