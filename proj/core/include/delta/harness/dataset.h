#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace delta::harness {

// Prompt template with a single "{input}" placeholder.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text = "{input}");
  static PromptTemplate load(const std::filesystem::path& path);

  std::string render(std::string_view input) const;
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

struct Problem {
  std::string problem_id;
  std::string question;
  std::string prompt;  // question rendered through the template
  std::string ground_truth;
};

// qa-jsonl: one object per line with a question ("question", "problem",
// "prompt" or "input") and an "answer" (or "ground_truth"). The problem id is
// the "id"/"problem_id" field when present, else the 0-based line index.
// Throws kIngestion naming the 1-based line.
std::vector<Problem> ingest_dataset(const std::filesystem::path& path,
                                    const PromptTemplate& tmpl = PromptTemplate());

}  // namespace delta::harness
