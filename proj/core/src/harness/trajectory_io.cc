#include "delta/harness/trajectory_io.h"

#include <algorithm>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "delta/error.h"
#include "delta/vocabulary.h"

namespace delta::harness {

std::string encode_trajectory_line(const TrajectoryLine& line) {
  const auto& traj = line.trajectory;
  nlohmann::ordered_json j;
  j["sample_index"] = line.sample_index;
  j["problem_id"] = line.problem_id;
  j["prompt_tokens"] = traj.prompt_tokens;
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
  std::vector<double> kl;
  bool has_kl = !traj.generated.empty();
  for (const auto& step : traj.generated) {
    tokens.push_back(step.token);
    logprobs.push_back(step.chosen_logprob);
    if (step.kl_base_vs_combined) {
      kl.push_back(*step.kl_base_vs_combined);
    } else {
      has_kl = false;
    }
  }
  j["tokens"] = tokens;
  j["logprobs"] = logprobs;
  if (has_kl) j["kl"] = kl;
  j["stop_reason"] = to_string(traj.stop_reason);
  j["extracted_answer"] =
      line.extracted_answer ? nlohmann::ordered_json(*line.extracted_answer) : nullptr;
  return j.dump();
}

TrajectoryLine parse_trajectory_line(const std::string& json) {
  try {
    auto j = nlohmann::json::parse(json);
    TrajectoryLine line;
    line.sample_index = j.at("sample_index").get<std::size_t>();
    line.problem_id = j.at("problem_id").get<std::string>();
    auto& traj = line.trajectory;
    traj.prompt_tokens = j.at("prompt_tokens").get<std::vector<TokenId>>();
    const auto tokens = j.at("tokens").get<std::vector<TokenId>>();
    const auto logprobs = j.at("logprobs").get<std::vector<double>>();
    std::vector<double> kl;
    if (j.contains("kl")) kl = j.at("kl").get<std::vector<double>>();
    if (logprobs.size() != tokens.size() || (!kl.empty() && kl.size() != tokens.size())) {
      throw Error(ErrorCode::kIngestion, "trajectory arrays have different lengths");
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      StepRecord step;
      step.token = tokens[i];
      step.chosen_logprob = logprobs[i];
      if (!kl.empty()) step.kl_base_vs_combined = kl[i];
      traj.generated.push_back(step);
    }
    traj.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    if (!j.at("extracted_answer").is_null()) {
      line.extracted_answer = j.at("extracted_answer").get<std::string>();
    }
    return line;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIngestion, std::string("trajectory line: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "rename " + tmp.string() + ": " + ec.message());
}

std::vector<TrajectoryLine> load_trajectory_lines(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl" &&
        entry.path().parent_path().filename() == "trajectories") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TrajectoryLine> out;
  for (const auto& f : files) {
    const auto lines = read_lines(f);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      try {
        out.push_back(parse_trajectory_line(lines[i]));
      } catch (const Error& e) {
        throw Error(ErrorCode::kIngestion, f.string() + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
  return out;
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& dir) {
  std::vector<Trajectory> out;
  for (auto& line : load_trajectory_lines(dir)) out.push_back(std::move(line.trajectory));
  return out;
}

}  // namespace delta::harness
