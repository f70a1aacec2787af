#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delta/decoder.h"

namespace delta::harness {

// One persisted sample: a single JSON line with the fields sample_index,
// problem_id, prompt_tokens, tokens, logprobs, kl (when recorded),
// stop_reason and extracted_answer.
struct TrajectoryLine {
  std::size_t sample_index = 0;
  std::string problem_id;
  Trajectory trajectory;
  std::optional<std::string> extracted_answer;
};

std::string encode_trajectory_line(const TrajectoryLine& line);
TrajectoryLine parse_trajectory_line(const std::string& json);

// Writes through a temporary file and rename, so a file either exists
// complete or not at all.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Every trajectory line under dir (recursively), ordered by file path then
// line.
std::vector<TrajectoryLine> load_trajectory_lines(const std::filesystem::path& dir);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& dir);

}  // namespace delta::harness
