#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "delta/decoder.h"
#include "delta/vocabulary.h"

namespace delta {

struct PcrReport {
  std::vector<double> per_trajectory;
  double mean = 0.0;
  std::size_t n_trajectories = 0;
};

// Path coverage rate: the fraction of generated positions i = 2..n whose
// token matches the probe's teacher-forced greedy prediction, averaged per
// trajectory and then over trajectories.
PcrReport pcr(std::span<const Trajectory> trajectories, const Scorer& probe);

using DeltaSeries = std::vector<DeltaLogits>;

// Mean over steps of the cosine between aligned delta vectors. Throws
// kUndefinedCosine naming the step if either vector has zero norm.
double avg_cosine_sim(std::span<const DeltaLogits> series_a, std::span<const DeltaLogits> series_b);

// Behaviour categories (e.g. branching, backtracking, self-verification)
// mapped to token surfaces. Matching is case-insensitive.
struct TokenSetSpec {
  std::map<std::string, std::set<std::string>> categories;

  // JSON object {category: [token, ...]}.
  static TokenSetSpec load(const std::filesystem::path& path);
};

// Per category: matching generated tokens / all generated tokens.
std::map<std::string, double> token_frequency(std::span<const Trajectory> trajectories,
                                              const TokenSetSpec& spec, const Vocabulary& vocab);

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;  // population convention: a single value has stddev 0
  std::size_t min = 0;
  std::size_t max = 0;
  std::size_t count = 0;
};

LengthStats length_stats(std::span<const Trajectory> trajectories);
std::map<std::string, LengthStats> length_stats(
    const std::map<std::string, std::vector<Trajectory>>& groups);

}  // namespace delta
