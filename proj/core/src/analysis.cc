#include "delta/analysis.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "delta/error.h"

namespace delta {
namespace {

std::string fold_case(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

PcrReport pcr(std::span<const Trajectory> trajectories, const Scorer& probe) {
  PcrReport report;
  report.n_trajectories = trajectories.size();
  report.per_trajectory.reserve(trajectories.size());
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    std::vector<ReplayPair> pairs;
    try {
      pairs = replay_against(trajectories[t], probe);
    } catch (const Error& e) {
      throw Error(e.code(), "trajectory " + std::to_string(t) + ": " + e.what());
    }
    std::size_t matches = 0;
    for (const auto& p : pairs) matches += p.predicted == p.actual ? 1 : 0;
    report.per_trajectory.push_back(static_cast<double>(matches) /
                                    static_cast<double>(pairs.size()));
  }
  if (!report.per_trajectory.empty()) {
    double sum = 0.0;
    for (double v : report.per_trajectory) sum += v;
    report.mean = sum / static_cast<double>(report.per_trajectory.size());
  }
  return report;
}

double avg_cosine_sim(std::span<const DeltaLogits> series_a, std::span<const DeltaLogits> series_b) {
  if (series_a.size() != series_b.size()) {
    throw Error(ErrorCode::kVocabMismatch, "delta series lengths " +
                                               std::to_string(series_a.size()) + " and " +
                                               std::to_string(series_b.size()));
  }
  if (series_a.empty()) throw Error(ErrorCode::kEmptyInput, "empty delta series");
  double sum = 0.0;
  for (std::size_t t = 0; t < series_a.size(); ++t) {
    const auto& a = series_a[t];
    const auto& b = series_b[t];
    if (a.size() != b.size()) {
      throw Error(ErrorCode::kVocabMismatch, "step " + std::to_string(t) + " vector lengths differ");
    }
    const double na = a.l2_norm();
    const double nb = b.l2_norm();
    if (na == 0.0 || nb == 0.0) {
      throw Error(ErrorCode::kUndefinedCosine, "zero-norm delta at step " + std::to_string(t));
    }
    // sqrt(|a|^2 |b|^2) makes cos(x, x) exactly 1 when the product is representable.
    const double aa = a.dot(a.values());
    const double bb = b.dot(b.values());
    const double denom = std::isnormal(aa * bb) ? std::sqrt(aa * bb) : na * nb;
    const double cos = a.dot(b.values()) / denom;
    sum += std::clamp(cos, -1.0, 1.0);
  }
  return sum / static_cast<double>(series_a.size());
}

TokenSetSpec TokenSetSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  TokenSetSpec spec;
  try {
    auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw Error(ErrorCode::kIngestion, path.string() + ": expected an object");
    for (const auto& [category, tokens] : j.items()) {
      auto& set = spec.categories[category];
      for (const auto& t : tokens) set.insert(t.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIngestion, path.string() + ": " + e.what());
  }
  if (spec.categories.empty()) {
    throw Error(ErrorCode::kIngestion, path.string() + ": no categories");
  }
  return spec;
}

std::map<std::string, double> token_frequency(std::span<const Trajectory> trajectories,
                                              const TokenSetSpec& spec, const Vocabulary& vocab) {
  if (trajectories.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories");
  if (spec.categories.empty()) throw Error(ErrorCode::kEmptyInput, "no token categories");

  std::map<std::string, std::set<std::string>> folded;
  for (const auto& [category, tokens] : spec.categories) {
    auto& set = folded[category];
    for (const auto& t : tokens) set.insert(fold_case(t));
  }

  std::map<std::string, std::size_t> hits;
  for (const auto& [category, _] : folded) hits[category] = 0;
  std::size_t total = 0;
  for (const auto& traj : trajectories) {
    for (const auto& step : traj.generated) {
      ++total;
      const std::string surface = fold_case(vocab.surface(step.token));
      for (const auto& [category, set] : folded) {
        if (set.contains(surface)) ++hits[category];
      }
    }
  }

  std::map<std::string, double> out;
  for (const auto& [category, n] : hits) {
    out[category] = total == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(total);
  }
  return out;
}

LengthStats length_stats(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw Error(ErrorCode::kEmptyInput, "empty trajectory group");
  LengthStats s;
  s.count = trajectories.size();
  s.min = trajectories.front().generated.size();
  s.max = s.min;
  double sum = 0.0;
  for (const auto& t : trajectories) {
    const std::size_t n = t.generated.size();
    s.min = std::min(s.min, n);
    s.max = std::max(s.max, n);
    sum += static_cast<double>(n);
  }
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (const auto& t : trajectories) {
    const double d = static_cast<double>(t.generated.size()) - s.mean;
    sq += d * d;
  }
  s.stddev = std::sqrt(sq / static_cast<double>(s.count));
  return s;
}

std::map<std::string, LengthStats> length_stats(
    const std::map<std::string, std::vector<Trajectory>>& groups) {
  std::map<std::string, LengthStats> out;
  for (const auto& [name, trajectories] : groups) {
    try {
      out[name] = length_stats(trajectories);
    } catch (const Error& e) {
      throw Error(e.code(), "group '" + name + "': " + e.what());
    }
  }
  return out;
}

}  // namespace delta
