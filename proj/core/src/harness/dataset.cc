#include "delta/harness/dataset.h"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "delta/error.h"
#include "delta/vocabulary.h"

namespace delta::harness {
namespace {

constexpr std::string_view kPlaceholder = "{input}";

std::string first_string(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = j.find(k);
    if (it == j.end() || it->is_null()) continue;
    return it->is_string() ? it->get<std::string>() : it->dump();
  }
  return {};
}

bool has_any(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = j.find(k);
    if (it != j.end() && !it->is_null()) return true;
  }
  return false;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  if (text_.find(kPlaceholder) == std::string::npos) {
    throw Error(ErrorCode::kInvalidConfig, "prompt template lacks an {input} placeholder");
  }
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return PromptTemplate(ss.str());
}

std::string PromptTemplate::render(std::string_view input) const {
  std::string out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text_.find(kPlaceholder, start);
    if (pos == std::string::npos) break;
    out.append(text_, start, pos - start);
    out.append(input);
    start = pos + kPlaceholder.size();
  }
  out.append(text_, start);
  return out;
}

std::vector<Problem> ingest_dataset(const std::filesystem::path& path, const PromptTemplate& tmpl) {
  const auto lines = read_lines(path);
  std::vector<Problem> problems;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::kIngestion, where + ": not a JSON object");
    }
    if (!has_any(j, {"question", "problem", "prompt", "input"})) {
      throw Error(ErrorCode::kIngestion, where + ": missing question field");
    }
    if (!has_any(j, {"answer", "ground_truth"})) {
      throw Error(ErrorCode::kIngestion, where + ": missing answer field");
    }
    Problem p;
    p.problem_id = has_any(j, {"id", "problem_id"}) ? first_string(j, {"id", "problem_id"})
                                                    : std::to_string(i);
    p.question = first_string(j, {"question", "problem", "prompt", "input"});
    p.prompt = tmpl.render(p.question);
    p.ground_truth = first_string(j, {"answer", "ground_truth"});
    problems.push_back(std::move(p));
  }
  return problems;
}

}  // namespace delta::harness
