#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delta/core.h"
#include "delta/metrics.h"
#include "delta/vocabulary.h"

namespace delta::harness {

struct ArmSpec {
  std::string label;
  std::string base;                        // scorer spec
  std::optional<std::string> expert;       // scorer spec
  std::optional<std::string> expert_base;  // scorer spec
  DecodeConfig config;
  std::optional<std::string> template_path;  // overrides the manifest template
  bool record_kl = false;
};

// Campaign description. Relative paths are resolved against base_dir (the
// manifest's directory when loaded from disk).
struct RunManifest {
  std::string run_id;
  std::vector<ArmSpec> arms;
  std::string dataset;
  std::size_t samples_per_problem = 32;
  std::optional<std::string> template_path;
  std::optional<std::string> vocab_path;  // defaults to the first n-gram model's vocabulary
  TokenizerMode tokenizer = TokenizerMode::kWhitespace;
  AnswerStyle answer_style = AnswerStyle::kBoxed;
  std::string created_at;
  std::string code_version;
  std::filesystem::path base_dir;

  static RunManifest load(const std::filesystem::path& path);
  static RunManifest from_json(const std::string& json, const std::filesystem::path& base_dir);
  std::string to_json() const;
};

struct CampaignOptions {
  std::size_t workers = 1;
  // Stop after decoding this many new samples (a later run resumes).
  std::optional<std::size_t> max_new_items;
  int scorer_timeout_ms = 30000;
};

struct ArmReport {
  std::string label;
  std::size_t completed = 0;
  std::size_t skipped = 0;  // already on disk
  std::size_t expected = 0;
  bool degraded = false;
  std::vector<std::string> errors;
  double mean_accuracy = 0.0;
  double accuracy_stddev = 0.0;  // across sample indices
  double wall_clock_seconds = 0.0;
};

struct CampaignReport {
  std::filesystem::path run_dir;
  std::vector<ArmReport> arms;
  bool complete = false;
};

// Decodes every (arm, problem, sample) not yet on disk under
// out_dir/run_id. Layout:
//   vocab.txt, manifest.json
//   <arm>/trajectories/<problem>__s<sample>.jsonl   one trajectory line
//   <arm>/records.jsonl                             EvalRecords
//   <arm>/summary.json
// The random stream of a sample is keyed by (seed, problem_id, sample_index),
// so reruns and resumes reproduce files byte for byte.
CampaignReport run_campaign(const RunManifest& manifest, const std::filesystem::path& out_dir,
                            const CampaignOptions& options = {});

struct SweepRow {
  double lambda = 0.0;
  double temperature = 0.0;
  double mean_accuracy = 0.0;
  double stddev = 0.0;
  bool degraded = false;
  std::optional<std::string> error;
};

// Runs the chosen arm (default: the first arm with an expert) once per
// (lambda, temperature) cell under out_dir/run_id/sweep/.
std::vector<SweepRow> sweep(const RunManifest& manifest, const std::vector<double>& lambdas,
                            const std::vector<double>& temperatures,
                            const std::filesystem::path& out_dir,
                            const std::optional<std::string>& arm_label = std::nullopt,
                            const CampaignOptions& options = {});

std::string sanitize_file_component(const std::string& s);

}  // namespace delta::harness
