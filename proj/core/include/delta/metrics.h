#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace delta {

enum class AnswerStyle { kBoxed, kLastNumber };

std::string to_string(AnswerStyle style);
AnswerStyle answer_style_from_string(const std::string& s);

// boxed: contents of the last balanced \boxed{...} group.
// last_number: the final decimal numeral (optional sign and fraction part,
// thousands separators removed).
std::optional<std::string> extract_answer(std::string_view completion, AnswerStyle style);

// Canonical form: trimmed, surrounding $ removed, lower-cased, internal
// whitespace collapsed.
std::string canonicalize_answer(std::string_view answer);

// Parses integers, decimals, a/b and \frac{a}{b} (or \dfrac/\tfrac).
std::optional<double> parse_rational(std::string_view canonical);

// Equal canonical forms, or both rational and within 1e-9.
bool answers_match(std::string_view prediction, std::string_view truth);

struct EvalRecord {
  std::string problem_id;
  std::string ground_truth;
  std::vector<std::string> predictions;  // empty string: nothing extracted
  std::vector<bool> correct;

  // Fills `correct` from answers_match.
  static EvalRecord make(std::string problem_id, std::string ground_truth,
                         std::vector<std::string> predictions);
  std::size_t num_correct() const;
};

// JSON lines {problem_id, ground_truth, predictions:[...]}; correctness is
// recomputed on load. Errors name the line.
std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path);
void save_eval_records(const std::filesystem::path& path, std::span<const EvalRecord> records);

enum class Estimator { kExact, kResampled };

struct MetricResult {
  double value = 0.0;
  int k = 0;
  Estimator estimator = Estimator::kExact;
  int repeats = 0;
  std::optional<double> stderr_value;
};

std::string to_string(Estimator e);

// Probability that a uniform size-k subset of the n samples holds at least
// one correct answer, 1 - C(n-c, k) / C(n, k), averaged over records.
MetricResult pass_at_k_exact(std::span<const EvalRecord> records, int k);
double pass_at_k_exact(int n, int c, int k);

// Draws a size-k subset per problem (without replacement) per repeat and
// scores the any-correct indicator; reports the mean over repeats and its
// standard error. Substreams are keyed by (seed, repeat, problem index).
MetricResult pass_at_k_resampled(std::span<const EvalRecord> records, int k, int repeats,
                                 std::uint64_t seed);

// Accuracy of the modal answer of a size-k subset. Ties go to the answer
// whose first occurrence comes earliest in pool order; empty predictions do
// not vote.
MetricResult majority_at_k(std::span<const EvalRecord> records, int k, int repeats,
                           std::uint64_t seed);

// (method - base) / (rl - base). Any common scale works. Throws
// kDegenerateGap when rl == base.
double recovery_rate(double acc_method, double acc_base, double acc_rl);

}  // namespace delta
