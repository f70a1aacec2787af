#include "delta/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>

#include <json.hpp>

#include "delta/error.h"
#include "delta/random.h"
#include "delta/vocabulary.h"

namespace delta {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Position just past the brace matching the '{' at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

std::optional<double> parse_decimal(std::string_view s) {
  static const std::regex kDecimal(R"(^[+-]?(\d{1,3}(,\d{3})+|\d+)(\.\d+)?$|^[+-]?\.\d+$)");
  const std::string str(s);
  if (!std::regex_match(str, kDecimal)) return std::nullopt;
  std::string digits;
  for (char c : str) {
    if (c != ',') digits += c;
  }
  return std::stod(digits);
}

__extension__ typedef unsigned __int128 u128;

// C(n, k) when it fits in 64 bits.
std::optional<std::uint64_t> binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  u128 c = 1;
  for (int i = 0; i < k; ++i) {
    c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    if (c > std::numeric_limits<std::uint64_t>::max()) return std::nullopt;
  }
  return static_cast<std::uint64_t>(c);
}

void validate_k(std::span<const EvalRecord> records, int k) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no evaluation records");
  for (const auto& r : records) {
    const auto n = static_cast<int>(r.predictions.size());
    if (k < 1 || k > n) {
      throw Error(ErrorCode::kInvalidK, "k=" + std::to_string(k) + " but problem '" +
                                            r.problem_id + "' has a pool of " + std::to_string(n));
    }
    if (r.correct.size() != r.predictions.size()) {
      throw Error(ErrorCode::kInvalidConfig,
                  "problem '" + r.problem_id + "' has misaligned correctness flags");
    }
  }
}

// Uniform size-k subset of [0, n), returned in ascending (pool) order.
std::vector<std::size_t> draw_subset(std::size_t n, std::size_t k, RandomStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct RunningMean {
  double mean = 0.0;
  double m2 = 0.0;
  int n = 0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double stderr_of_mean() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / (n - 1) / n);
  }
};

std::string vote_key(const std::string& prediction) {
  const std::string canonical = canonicalize_answer(prediction);
  if (auto v = parse_rational(canonical)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "#%.12g", *v);
    return buf;
  }
  return canonical;
}

template <class Indicator>
MetricResult resample(std::span<const EvalRecord> records, int k, int repeats,
                      std::uint64_t seed, Indicator indicator) {
  validate_k(records, k);
  if (repeats < 1) throw Error(ErrorCode::kInvalidConfig, "repeats must be >= 1");
  RunningMean acc;
  for (int r = 0; r < repeats; ++r) {
    double sum = 0.0;
    for (std::size_t p = 0; p < records.size(); ++p) {
      RandomStream rng = RandomStream::keyed(seed, {static_cast<std::uint64_t>(r), p});
      const auto subset =
          draw_subset(records[p].predictions.size(), static_cast<std::size_t>(k), rng);
      sum += indicator(records[p], subset) ? 1.0 : 0.0;
    }
    acc.add(sum / static_cast<double>(records.size()));
  }
  MetricResult out;
  out.value = acc.mean;
  out.k = k;
  out.estimator = Estimator::kResampled;
  out.repeats = repeats;
  out.stderr_value = acc.stderr_of_mean();
  return out;
}

}  // namespace

std::string to_string(AnswerStyle style) {
  return style == AnswerStyle::kBoxed ? "boxed" : "last_number";
}

AnswerStyle answer_style_from_string(const std::string& s) {
  if (s == "boxed") return AnswerStyle::kBoxed;
  if (s == "last_number") return AnswerStyle::kLastNumber;
  throw Error(ErrorCode::kInvalidConfig, "unknown answer style '" + s + "'");
}

std::string to_string(Estimator e) { return e == Estimator::kExact ? "exact" : "resampled"; }

std::optional<std::string> extract_answer(std::string_view completion, AnswerStyle style) {
  if (style == AnswerStyle::kBoxed) {
    constexpr std::string_view kTag = "\\boxed";
    std::optional<std::string> last;
    std::size_t pos = completion.find(kTag);
    while (pos != std::string_view::npos) {
      std::size_t open = pos + kTag.size();
      while (open < completion.size() && completion[open] == ' ') ++open;
      if (open < completion.size() && completion[open] == '{') {
        const std::size_t end = match_brace(completion, open);
        if (end != std::string_view::npos) {
          last = std::string(completion.substr(open + 1, end - open - 2));
        }
      }
      pos = completion.find(kTag, pos + kTag.size());
    }
    return last;
  }

  static const std::regex kNumber(R"([+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)");
  const std::string text(completion);
  std::optional<std::string> last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  if (last) std::erase(*last, ',');
  return last;
}

std::string canonicalize_answer(std::string_view answer) {
  std::string_view s = trim(answer);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = trim(s.substr(1, s.size() - 2));
  }
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::optional<double> parse_rational(std::string_view canonical) {
  std::string_view s = trim(canonical);
  if (s.empty()) return std::nullopt;
  if (auto v = parse_decimal(s)) return v;

  double sign = 1.0;
  std::string_view body = s;
  if (body.front() == '-' || body.front() == '+') {
    sign = body.front() == '-' ? -1.0 : 1.0;
    body.remove_prefix(1);
  }
  for (std::string_view tag : {"\\frac", "\\dfrac", "\\tfrac"}) {
    if (!body.starts_with(tag)) continue;
    const std::size_t open1 = tag.size();
    if (open1 >= body.size() || body[open1] != '{') return std::nullopt;
    const std::size_t end1 = match_brace(body, open1);
    if (end1 == std::string_view::npos || end1 >= body.size() || body[end1] != '{') {
      return std::nullopt;
    }
    const std::size_t end2 = match_brace(body, end1);
    if (end2 != body.size()) return std::nullopt;
    auto num = parse_decimal(trim(body.substr(open1 + 1, end1 - open1 - 2)));
    auto den = parse_decimal(trim(body.substr(end1 + 1, end2 - end1 - 2)));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return sign * *num / *den;
  }

  if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    auto num = parse_decimal(trim(s.substr(0, slash)));
    auto den = parse_decimal(trim(s.substr(slash + 1)));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  return std::nullopt;
}

bool answers_match(std::string_view prediction, std::string_view truth) {
  const std::string a = canonicalize_answer(prediction);
  const std::string b = canonicalize_answer(truth);
  if (a == b) return true;
  const auto x = parse_rational(a);
  const auto y = parse_rational(b);
  return x && y && std::abs(*x - *y) <= 1e-9;
}

EvalRecord EvalRecord::make(std::string problem_id, std::string ground_truth,
                            std::vector<std::string> predictions) {
  EvalRecord r{std::move(problem_id), std::move(ground_truth), std::move(predictions), {}};
  r.correct.reserve(r.predictions.size());
  for (const auto& p : r.predictions) {
    r.correct.push_back(!p.empty() && answers_match(p, r.ground_truth));
  }
  return r;
}

std::size_t EvalRecord::num_correct() const {
  return static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
}

std::vector<EvalRecord> load_eval_records(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  std::vector<EvalRecord> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      auto j = nlohmann::json::parse(lines[i]);
      std::string id = j.at("problem_id").is_string() ? j.at("problem_id").get<std::string>()
                                                      : j.at("problem_id").dump();
      out.push_back(EvalRecord::make(std::move(id), j.at("ground_truth").get<std::string>(),
                                     j.at("predictions").get<std::vector<std::string>>()));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIngestion,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

void save_eval_records(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["problem_id"] = r.problem_id;
    j["ground_truth"] = r.ground_truth;
    j["predictions"] = r.predictions;
    j["correct"] = r.correct;
    out << j.dump() << '\n';
  }
}

double pass_at_k_exact(int n, int c, int k) {
  if (k < 1 || k > n) {
    throw Error(ErrorCode::kInvalidK, "k=" + std::to_string(k) + " with pool " + std::to_string(n));
  }
  if (c < 0 || c > n) throw Error(ErrorCode::kInvalidConfig, "correct count outside pool");
  const auto all = binomial(n, k);
  const auto none = binomial(n - c, k);
  if (all && none) {
    return static_cast<double>(*all - *none) / static_cast<double>(*all);
  }
  long double miss = 1.0L;
  for (int i = 0; i < k; ++i) {
    miss *= static_cast<long double>(n - c - i) / static_cast<long double>(n - i);
  }
  return static_cast<double>(1.0L - std::max(miss, 0.0L));
}

MetricResult pass_at_k_exact(std::span<const EvalRecord> records, int k) {
  validate_k(records, k);
  double sum = 0.0;
  for (const auto& r : records) {
    sum += pass_at_k_exact(static_cast<int>(r.predictions.size()),
                           static_cast<int>(r.num_correct()), k);
  }
  MetricResult out;
  out.value = sum / static_cast<double>(records.size());
  out.k = k;
  out.estimator = Estimator::kExact;
  return out;
}

MetricResult pass_at_k_resampled(std::span<const EvalRecord> records, int k, int repeats,
                                 std::uint64_t seed) {
  return resample(records, k, repeats, seed,
                  [](const EvalRecord& r, const std::vector<std::size_t>& subset) {
                    return std::any_of(subset.begin(), subset.end(),
                                       [&](std::size_t i) { return r.correct[i]; });
                  });
}

MetricResult majority_at_k(std::span<const EvalRecord> records, int k, int repeats,
                           std::uint64_t seed) {
  return resample(records, k, repeats, seed,
                  [](const EvalRecord& r, const std::vector<std::size_t>& subset) {
                    // key -> (votes, first pool index)
                    std::map<std::string, std::pair<int, std::size_t>> votes;
                    for (std::size_t i : subset) {
                      if (r.predictions[i].empty()) continue;
                      auto [it, inserted] =
                          votes.try_emplace(vote_key(r.predictions[i]), 0, i);
                      ++it->second.first;
                    }
                    if (votes.empty()) return false;
                    const std::pair<int, std::size_t>* best = nullptr;
                    for (const auto& [key, v] : votes) {
                      if (best == nullptr || v.first > best->first ||
                          (v.first == best->first && v.second < best->second)) {
                        best = &v;
                      }
                    }
                    return static_cast<bool>(r.correct[best->second]);
                  });
}

double recovery_rate(double acc_method, double acc_base, double acc_rl) {
  if (acc_rl == acc_base) {
    throw Error(ErrorCode::kDegenerateGap, "RL and base accuracies are equal (" +
                                               std::to_string(acc_rl) + ")");
  }
  return (acc_method - acc_base) / (acc_rl - acc_base);
}

}  // namespace delta
