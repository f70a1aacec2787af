#include "delta/harness/scorer_factory.h"

#include <fstream>

#include <json.hpp>

#include "delta/error.h"
#include "delta/ngram.h"
#include "delta/remote/client.h"
#include "delta/synthetic.h"

namespace delta::harness {
namespace {

enum class FileKind { kNGram, kSynthetic };

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base_dir) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  return path;
}

FileKind sniff(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kIngestion, path.string() + ": not a scorer file");
  }
  if (j.value("format", "") == "delta-ngram") return FileKind::kNGram;
  if (j.contains("rule")) return FileKind::kSynthetic;
  throw Error(ErrorCode::kIngestion, path.string() + ": unknown scorer file format");
}

}  // namespace

std::unique_ptr<Scorer> open_scorer(const std::string& spec, const std::filesystem::path& base_dir,
                                    int timeout_ms) {
  if (spec.starts_with("tcp://") || spec.starts_with("stdio:")) {
    auto endpoint = remote::ScorerEndpoint::parse(spec);
    endpoint.timeout_ms = timeout_ms;
    return std::make_unique<remote::RemoteScorer>(endpoint);
  }
  if (spec.starts_with("ngram:")) {
    return std::make_unique<NGramModel>(NGramModel::load(resolve(spec.substr(6), base_dir)));
  }
  if (spec.starts_with("synthetic:")) {
    return std::make_unique<SyntheticScorer>(
        SyntheticScorer::load(resolve(spec.substr(10), base_dir)));
  }
  const auto path = resolve(spec, base_dir);
  if (sniff(path) == FileKind::kNGram) return std::make_unique<NGramModel>(NGramModel::load(path));
  return std::make_unique<SyntheticScorer>(SyntheticScorer::load(path));
}

std::optional<VocabularyInfo> vocabulary_of(const std::string& spec,
                                            const std::filesystem::path& base_dir) {
  std::filesystem::path path;
  if (spec.starts_with("ngram:")) {
    path = resolve(spec.substr(6), base_dir);
  } else if (spec.starts_with("tcp://") || spec.starts_with("stdio:") ||
             spec.starts_with("synthetic:")) {
    return std::nullopt;
  } else {
    path = resolve(spec, base_dir);
    if (sniff(path) != FileKind::kNGram) return std::nullopt;
  }
  auto model = NGramModel::load(path);
  return VocabularyInfo{model.vocab(), model.tokenizer()};
}

}  // namespace delta::harness
