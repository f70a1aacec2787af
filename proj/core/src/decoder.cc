#include "delta/decoder.h"

#include <cmath>
#include <future>

#include "delta/error.h"

namespace delta {
namespace {

LogitVector score_at_step(const Scorer& scorer, std::span<const TokenId> prefix,
                          std::size_t step, const char* role) {
  try {
    LogitVector logits = scorer.score(prefix);
    if (logits.size() != scorer.vocab_size()) {
      throw Error(ErrorCode::kVocabMismatch, "scorer returned " + std::to_string(logits.size()) +
                                                 " logits for vocabulary of size " +
                                                 std::to_string(scorer.vocab_size()));
    }
    return logits;
  } catch (const Error& e) {
    throw Error(e.code(), "step " + std::to_string(step) + " (" + role + " scorer): " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kScorer,
                "step " + std::to_string(step) + " (" + role + " scorer): " + e.what());
  }
}

void check_prefix(std::span<const TokenId> tokens, std::size_t vocab_size, const char* what) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab_size) {
      throw Error(ErrorCode::kVocabMismatch, std::string(what) + " token " + std::to_string(i) +
                                                 " (id " + std::to_string(tokens[i]) +
                                                 ") outside vocabulary of size " +
                                                 std::to_string(vocab_size));
    }
  }
}

}  // namespace

std::string to_string(StopReason reason) {
  return reason == StopReason::kEos ? "eos" : "max_tokens";
}

StopReason stop_reason_from_string(const std::string& s) {
  if (s == "eos") return StopReason::kEos;
  if (s == "max_tokens") return StopReason::kMaxTokens;
  throw Error(ErrorCode::kIngestion, "unknown stop reason '" + s + "'");
}

std::vector<TokenId> Trajectory::tokens() const {
  std::vector<TokenId> out;
  out.reserve(generated.size());
  for (const auto& step : generated) out.push_back(step.token);
  return out;
}

Trajectory decode(const ScorerSet& scorers, std::span<const TokenId> prompt,
                  const DecodeConfig& config, const DecodeOptions& options) {
  config.validate();
  if (scorers.base == nullptr) throw Error(ErrorCode::kInvalidConfig, "decode without a base scorer");
  if ((scorers.expert == nullptr) != (scorers.expert_base == nullptr)) {
    throw Error(ErrorCode::kInvalidConfig, "expert and expert_base must be given together");
  }
  if (prompt.empty()) throw Error(ErrorCode::kInvalidConfig, "empty prompt");

  const bool transfer = scorers.expert != nullptr;
  const std::size_t vocab_size = scorers.base->vocab_size();
  if (transfer && (scorers.expert->vocab_size() != vocab_size ||
                   scorers.expert_base->vocab_size() != vocab_size)) {
    throw Error(ErrorCode::kVocabMismatch,
                "scorer vocabularies differ: base " + std::to_string(vocab_size) + ", expert " +
                    std::to_string(scorers.expert->vocab_size()) + ", expert_base " +
                    std::to_string(scorers.expert_base->vocab_size()));
  }
  check_prefix(prompt, vocab_size, "prompt");
  if (options.eos && (*options.eos < 0 || static_cast<std::size_t>(*options.eos) >= vocab_size)) {
    throw Error(ErrorCode::kVocabMismatch, "eos id outside vocabulary");
  }

  Trajectory traj;
  traj.prompt_tokens.assign(prompt.begin(), prompt.end());
  traj.config_snapshot = config;
  traj.scorer_labels.base = scorers.base->label();
  if (transfer) {
    traj.scorer_labels.expert = scorers.expert->label();
    traj.scorer_labels.expert_base = scorers.expert_base->label();
  }

  RandomStream rng = RandomStream::keyed(config.seed, {options.stream_key});
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  const auto max_tokens = static_cast<std::size_t>(config.max_tokens);

  for (std::size_t step = 0; step < max_tokens; ++step) {
    std::optional<LogitVector> expert_logits;
    std::optional<LogitVector> expert_base_logits;
    LogitVector base_logits;
    if (transfer && options.parallel_scoring) {
      auto expert_future = std::async(std::launch::async, [&] {
        return score_at_step(*scorers.expert, context, step, "expert");
      });
      auto expert_base_future = std::async(std::launch::async, [&] {
        return score_at_step(*scorers.expert_base, context, step, "expert_base");
      });
      base_logits = score_at_step(*scorers.base, context, step, "base");
      expert_logits = expert_future.get();
      expert_base_logits = expert_base_future.get();
    } else {
      base_logits = score_at_step(*scorers.base, context, step, "base");
      if (transfer) {
        expert_logits = score_at_step(*scorers.expert, context, step, "expert");
        expert_base_logits = score_at_step(*scorers.expert_base, context, step, "expert_base");
      }
    }

    StepRecord record;
    LogitVector combined =
        transfer ? combine_logits(base_logits, *expert_logits, *expert_base_logits, config.lambda)
                 : base_logits;
    if (transfer && options.record_delta) {
      const DeltaLogits delta = delta_logits(*expert_logits, *expert_base_logits);
      record.delta_l2 = delta.l2_norm();
      record.delta_dot_base = delta.dot(base_logits.scores());
    }

    const Distribution step_dist =
        nucleus_filter(softmax_with_temperature(combined, config.temperature), config.top_p);

    const TokenId token = config.mode == DecodeMode::kGreedy
                              ? argmax_token(step_dist.probs())
                              : sample_token(step_dist, rng);
    record.token = token;
    record.chosen_logprob = std::log(step_dist[static_cast<std::size_t>(token)]);
    if (options.record_kl) {
      record.kl_base_vs_combined =
          kl_divergence(softmax_with_temperature(base_logits, config.temperature), step_dist);
    }

    traj.generated.push_back(record);
    context.push_back(token);
    if (options.eos && token == *options.eos) {
      traj.stop_reason = StopReason::kEos;
      return traj;
    }
  }
  traj.stop_reason = StopReason::kMaxTokens;
  return traj;
}

std::vector<ReplayPair> replay_against(const Trajectory& trajectory, const Scorer& probe) {
  const std::size_t n = trajectory.generated.size();
  if (n < 2) {
    throw Error(ErrorCode::kInsufficientTrajectory,
                "replay needs at least 2 generated tokens, got " + std::to_string(n));
  }
  std::vector<TokenId> context = trajectory.prompt_tokens;
  const auto tokens = trajectory.tokens();
  check_prefix(context, probe.vocab_size(), "prompt");
  check_prefix(tokens, probe.vocab_size(), "generated");

  std::vector<ReplayPair> pairs;
  pairs.reserve(n - 1);
  context.push_back(tokens[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const LogitVector logits = score_at_step(probe, context, i, "probe");
    pairs.push_back({argmax_token(logits), tokens[i]});
    context.push_back(tokens[i]);
  }
  return pairs;
}

std::vector<DeltaLogits> delta_series_along(const Trajectory& trajectory, const Scorer& expert,
                                            const Scorer& expert_base) {
  if (expert.vocab_size() != expert_base.vocab_size()) {
    throw Error(ErrorCode::kVocabMismatch, "expert and expert_base vocabularies differ");
  }
  std::vector<TokenId> context = trajectory.prompt_tokens;
  std::vector<DeltaLogits> series;
  series.reserve(trajectory.generated.size());
  for (std::size_t i = 0; i < trajectory.generated.size(); ++i) {
    series.push_back(delta_logits(score_at_step(expert, context, i, "expert"),
                                  score_at_step(expert_base, context, i, "expert_base")));
    context.push_back(trajectory.generated[i].token);
  }
  return series;
}

}  // namespace delta
