#include "delta/harness/campaign.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "delta/decoder.h"
#include "delta/error.h"
#include "delta/harness/dataset.h"
#include "delta/harness/scorer_factory.h"
#include "delta/harness/trajectory_io.h"
#include "delta/random.h"

namespace delta::harness {
namespace {

using ojson = nlohmann::ordered_json;

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base_dir) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return path;
}

DecodeConfig config_from_json(const nlohmann::json& j) {
  DecodeConfig c;
  c.lambda = j.value("lambda", c.lambda);
  c.temperature = j.value("temperature", c.temperature);
  c.top_p = j.value("top_p", c.top_p);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.mode = decode_mode_from_string(j.value("mode", to_string(c.mode)));
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

ojson config_to_json(const DecodeConfig& c) {
  ojson j;
  j["lambda"] = c.lambda;
  j["temperature"] = c.temperature;
  j["top_p"] = c.top_p;
  j["max_tokens"] = c.max_tokens;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  return j;
}

std::uint64_t sample_stream_key(const std::string& problem_id, std::size_t sample_index) {
  return mix64(hash_string(problem_id) ^ mix64(static_cast<std::uint64_t>(sample_index)));
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct VocabInfo {
  Vocabulary vocab;
  TokenizerMode tokenizer;
};

VocabInfo resolve_vocabulary(const RunManifest& m) {
  if (m.vocab_path) return {Vocabulary::load(resolve(*m.vocab_path, m.base_dir)), m.tokenizer};
  for (const auto& arm : m.arms) {
    for (const auto* spec : {&arm.base, arm.expert ? &*arm.expert : nullptr,
                             arm.expert_base ? &*arm.expert_base : nullptr}) {
      if (spec == nullptr) continue;
      if (auto info = vocabulary_of(*spec, m.base_dir)) return {info->vocab, info->tokenizer};
    }
  }
  throw Error(ErrorCode::kInvalidConfig,
              "manifest has no vocab and no arm references an n-gram model");
}

struct WorkItem {
  std::size_t problem = 0;
  std::size_t sample = 0;
  std::filesystem::path path;
};

std::filesystem::path trajectory_path(const std::filesystem::path& arm_dir,
                                      const std::string& problem_id, std::size_t sample) {
  return arm_dir / "trajectories" /
         (sanitize_file_component(problem_id) + "__s" + std::to_string(sample) + ".jsonl");
}

// Mean and population stddev over sample indices of the per-index accuracy.
std::pair<double, double> accuracy_by_sample(const std::vector<std::vector<std::optional<bool>>>& grid,
                                             std::size_t samples) {
  std::vector<double> per_sample;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t n = 0;
    std::size_t hits = 0;
    for (const auto& row : grid) {
      if (!row[s]) continue;
      ++n;
      hits += *row[s] ? 1 : 0;
    }
    if (n > 0) per_sample.push_back(static_cast<double>(hits) / static_cast<double>(n));
  }
  if (per_sample.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : per_sample) sum += v;
  const double mean = sum / static_cast<double>(per_sample.size());
  double sq = 0.0;
  for (double v : per_sample) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(per_sample.size()))};
}

class Budget {
 public:
  explicit Budget(std::optional<std::size_t> limit) : limit_(limit) {}
  bool claim() {
    std::lock_guard lock(mu_);
    if (!limit_) return true;
    if (*limit_ == 0) return false;
    --*limit_;
    return true;
  }
  bool exhausted() {
    std::lock_guard lock(mu_);
    return limit_ && *limit_ == 0;
  }

 private:
  std::mutex mu_;
  std::optional<std::size_t> limit_;
};

ArmReport run_arm(const RunManifest& m, const ArmSpec& arm, const VocabInfo& vocab,
                  const std::filesystem::path& run_dir, const CampaignOptions& options,
                  Budget& budget) {
  const auto started = std::chrono::steady_clock::now();
  ArmReport report;
  report.label = arm.label;
  const auto arm_dir = run_dir / sanitize_file_component(arm.label);
  std::filesystem::create_directories(arm_dir / "trajectories");
  // Leftovers of writes cut short by an earlier crash.
  std::vector<std::filesystem::path> stale;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(arm_dir)) {
    if (entry.is_regular_file() && entry.path().filename().string().find(".tmp.") != std::string::npos) {
      stale.push_back(entry.path());
    }
  }
  for (const auto& p : stale) std::filesystem::remove(p);

  const auto tmpl_path = arm.template_path ? arm.template_path : m.template_path;
  const PromptTemplate tmpl =
      tmpl_path ? PromptTemplate::load(resolve(*tmpl_path, m.base_dir)) : PromptTemplate();
  const auto problems = ingest_dataset(resolve(m.dataset, m.base_dir), tmpl);
  report.expected = problems.size() * m.samples_per_problem;

  std::vector<WorkItem> todo;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (std::size_t s = 0; s < m.samples_per_problem; ++s) {
      auto path = trajectory_path(arm_dir, problems[p].problem_id, s);
      if (std::filesystem::exists(path)) {
        ++report.skipped;
      } else {
        todo.push_back({p, s, std::move(path)});
      }
    }
  }

  std::mutex report_mu;
  if (!todo.empty()) {
    std::unique_ptr<Scorer> base;
    std::unique_ptr<Scorer> expert;
    std::unique_ptr<Scorer> expert_base;
    try {
      base = open_scorer(arm.base, m.base_dir, options.scorer_timeout_ms);
      if (arm.expert) expert = open_scorer(*arm.expert, m.base_dir, options.scorer_timeout_ms);
      if (arm.expert_base) {
        expert_base = open_scorer(*arm.expert_base, m.base_dir, options.scorer_timeout_ms);
      }
      for (const Scorer* s : {base.get(), expert.get(), expert_base.get()}) {
        if (s != nullptr && s->vocab_size() != vocab.vocab.size()) {
          throw Error(ErrorCode::kVocabMismatch,
                      "scorer " + s->label() + " has vocabulary size " +
                          std::to_string(s->vocab_size()) + ", run vocabulary has " +
                          std::to_string(vocab.vocab.size()));
        }
      }
    } catch (const Error& e) {
      report.degraded = true;
      report.errors.push_back(e.what());
      todo.clear();
    }

    const ScorerSet scorers{base.get(), expert.get(), expert_base.get()};
    std::vector<std::vector<TokenId>> prompts(problems.size());
    std::vector<std::string> prompt_errors(problems.size());
    for (std::size_t p = 0; p < problems.size() && !todo.empty(); ++p) {
      try {
        prompts[p] = tokenize(vocab.vocab, problems[p].prompt, vocab.tokenizer);
      } catch (const Error& e) {
        prompt_errors[p] = "problem " + problems[p].problem_id + ": " + e.what();
      }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        const auto& item = todo[i];
        if (!budget.claim()) return;
        const auto& problem = problems[item.problem];
        try {
          if (!prompt_errors[item.problem].empty()) {
            throw Error(ErrorCode::kIngestion, prompt_errors[item.problem]);
          }
          DecodeOptions opts;
          opts.eos = vocab.vocab.eos();
          opts.record_kl = arm.record_kl;
          opts.stream_key = sample_stream_key(problem.problem_id, item.sample);
          TrajectoryLine line;
          line.sample_index = item.sample;
          line.problem_id = problem.problem_id;
          line.trajectory = decode(scorers, prompts[item.problem], arm.config, opts);
          const auto generated = line.trajectory.tokens();
          line.extracted_answer = extract_answer(
              detokenize(vocab.vocab, generated, vocab.tokenizer), m.answer_style);
          write_file_atomic(item.path, encode_trajectory_line(line) + "\n");
          std::lock_guard lock(report_mu);
          ++report.completed;
        } catch (const std::exception& e) {
          std::lock_guard lock(report_mu);
          report.degraded = true;
          report.errors.push_back("problem " + problem.problem_id + " sample " +
                                  std::to_string(item.sample) + ": " + e.what());
        }
      }
    };
    const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, todo.size()));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }
  std::sort(report.errors.begin(), report.errors.end());

  // Rebuild records and summary from what is on disk.
  std::vector<EvalRecord> records;
  std::vector<std::vector<std::optional<bool>>> grid;
  std::size_t on_disk = 0;
  for (const auto& problem : problems) {
    std::vector<std::string> predictions;
    std::vector<std::optional<bool>> row(m.samples_per_problem);
    for (std::size_t s = 0; s < m.samples_per_problem; ++s) {
      const auto path = trajectory_path(arm_dir, problem.problem_id, s);
      if (!std::filesystem::exists(path)) continue;
      const auto lines = read_lines(path);
      if (lines.empty()) continue;
      const auto line = parse_trajectory_line(lines.front());
      predictions.push_back(line.extracted_answer.value_or(""));
      row[s] = !predictions.back().empty() && answers_match(predictions.back(), problem.ground_truth);
      ++on_disk;
    }
    grid.push_back(std::move(row));
    records.push_back(EvalRecord::make(problem.problem_id, problem.ground_truth, std::move(predictions)));
  }
  save_eval_records(arm_dir / "records.jsonl", records);
  std::tie(report.mean_accuracy, report.accuracy_stddev) =
      accuracy_by_sample(grid, m.samples_per_problem);

  ojson summary;
  summary["arm"] = arm.label;
  summary["config"] = config_to_json(arm.config);
  summary["problems"] = problems.size();
  summary["samples_per_problem"] = m.samples_per_problem;
  summary["expected"] = report.expected;
  summary["on_disk"] = on_disk;
  summary["mean_accuracy"] = report.mean_accuracy;
  summary["accuracy_stddev"] = report.accuracy_stddev;
  summary["degraded"] = on_disk < report.expected;
  write_file_atomic(arm_dir / "summary.json", summary.dump(2) + "\n");

  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace

std::string sanitize_file_component(const std::string& s) {
  std::string out;
  bool changed = s.empty();
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
    changed |= !ok;
  }
  if (out == "." || out == "..") changed = true;
  if (changed) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "-%08llx",
                  static_cast<unsigned long long>(hash_string(s) & 0xffffffffULL));
    out += buf;
  }
  return out;
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), path.parent_path());
}

RunManifest RunManifest::from_json(const std::string& json, const std::filesystem::path& base_dir) {
  RunManifest m;
  m.base_dir = base_dir;
  try {
    auto j = nlohmann::json::parse(json);
    m.run_id = j.at("run_id").get<std::string>();
    m.dataset = j.at("dataset").get<std::string>();
    m.samples_per_problem = j.value("samples_per_problem", m.samples_per_problem);
    if (j.contains("template")) m.template_path = j.at("template").get<std::string>();
    if (j.contains("vocab")) m.vocab_path = j.at("vocab").get<std::string>();
    m.tokenizer = tokenizer_mode_from_string(j.value("tokenizer", to_string(m.tokenizer)));
    m.answer_style = answer_style_from_string(j.value("answer_style", to_string(m.answer_style)));
    m.created_at = j.value("created_at", "");
    m.code_version = j.value("code_version", "");
    for (const auto& a : j.at("arms")) {
      ArmSpec arm;
      arm.label = a.at("label").get<std::string>();
      arm.base = a.at("base").get<std::string>();
      if (a.contains("expert") && !a.at("expert").is_null()) arm.expert = a.at("expert").get<std::string>();
      if (a.contains("expert_base") && !a.at("expert_base").is_null()) {
        arm.expert_base = a.at("expert_base").get<std::string>();
      }
      if (a.contains("template")) arm.template_path = a.at("template").get<std::string>();
      arm.record_kl = a.value("record_kl", false);
      arm.config = config_from_json(a.value("config", nlohmann::json::object()));
      m.arms.push_back(std::move(arm));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("manifest: ") + e.what());
  }
  if (m.run_id.empty()) throw Error(ErrorCode::kInvalidConfig, "manifest: empty run_id");
  if (m.arms.empty()) throw Error(ErrorCode::kInvalidConfig, "manifest: no arms");
  if (m.samples_per_problem < 1) {
    throw Error(ErrorCode::kInvalidConfig, "manifest: samples_per_problem must be >= 1");
  }
  std::set<std::string> labels;
  for (const auto& arm : m.arms) {
    if (!labels.insert(arm.label).second) {
      throw Error(ErrorCode::kInvalidConfig, "manifest: duplicate arm label '" + arm.label + "'");
    }
    if (arm.expert.has_value() != arm.expert_base.has_value()) {
      throw Error(ErrorCode::kInvalidConfig,
                  "manifest: arm '" + arm.label + "' needs both expert and expert_base");
    }
  }
  return m;
}

std::string RunManifest::to_json() const {
  ojson j;
  j["run_id"] = run_id;
  j["dataset"] = dataset;
  j["samples_per_problem"] = samples_per_problem;
  if (template_path) j["template"] = *template_path;
  if (vocab_path) j["vocab"] = *vocab_path;
  j["tokenizer"] = to_string(tokenizer);
  j["answer_style"] = to_string(answer_style);
  j["created_at"] = created_at;
  j["code_version"] = code_version;
  auto arms_json = ojson::array();
  for (const auto& arm : arms) {
    ojson a;
    a["label"] = arm.label;
    a["base"] = arm.base;
    a["expert"] = arm.expert ? ojson(*arm.expert) : ojson(nullptr);
    a["expert_base"] = arm.expert_base ? ojson(*arm.expert_base) : ojson(nullptr);
    if (arm.template_path) a["template"] = *arm.template_path;
    a["record_kl"] = arm.record_kl;
    a["config"] = config_to_json(arm.config);
    arms_json.push_back(std::move(a));
  }
  j["arms"] = std::move(arms_json);
  return j.dump(2);
}

CampaignReport run_campaign(const RunManifest& manifest, const std::filesystem::path& out_dir,
                            const CampaignOptions& options) {
  const VocabInfo vocab = resolve_vocabulary(manifest);
  CampaignReport report;
  report.run_dir = out_dir / manifest.run_id;
  std::filesystem::create_directories(report.run_dir);

  std::ostringstream vocab_text;
  for (const auto& s : vocab.vocab.surfaces()) vocab_text << s << '\n';
  write_file_atomic(report.run_dir / "vocab.txt", vocab_text.str());
  write_file_atomic(report.run_dir / "manifest.json", manifest.to_json() + "\n");

  Budget budget(options.max_new_items);
  report.complete = true;
  for (const auto& arm : manifest.arms) {
    report.arms.push_back(run_arm(manifest, arm, vocab, report.run_dir, options, budget));
    const auto& a = report.arms.back();
    if (a.skipped + a.completed < a.expected) report.complete = false;
  }
  return report;
}

std::vector<SweepRow> sweep(const RunManifest& manifest, const std::vector<double>& lambdas,
                            const std::vector<double>& temperatures,
                            const std::filesystem::path& out_dir,
                            const std::optional<std::string>& arm_label,
                            const CampaignOptions& options) {
  if (lambdas.empty() || temperatures.empty()) {
    throw Error(ErrorCode::kInvalidConfig, "sweep grids must be non-empty");
  }
  const ArmSpec* target = nullptr;
  for (const auto& arm : manifest.arms) {
    if (arm_label ? arm.label == *arm_label : arm.expert.has_value()) {
      target = &arm;
      break;
    }
  }
  if (target == nullptr) {
    throw Error(ErrorCode::kInvalidConfig,
                arm_label ? "no arm labelled '" + *arm_label + "'" : "no arm with an expert");
  }

  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    for (double temperature : temperatures) {
      SweepRow row;
      row.lambda = lambda;
      row.temperature = temperature;
      try {
        RunManifest cell = manifest;
        cell.run_id = manifest.run_id + "/sweep/lambda_" + format_number(lambda) + "_temp_" +
                      format_number(temperature);
        ArmSpec arm = *target;
        arm.config.lambda = lambda;
        arm.config.temperature = temperature;
        arm.config.validate();
        cell.arms = {arm};
        const auto report = run_campaign(cell, out_dir, options);
        const auto& a = report.arms.front();
        row.mean_accuracy = a.mean_accuracy;
        row.stddev = a.accuracy_stddev;
        row.degraded = a.degraded || !report.complete;
      } catch (const std::exception& e) {
        row.error = e.what();
        row.degraded = true;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace delta::harness
