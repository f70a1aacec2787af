#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "delta/scorer.h"
#include "delta/vocabulary.h"

namespace delta::harness {

// Opens a scorer from a spec string:
//   ngram:<path>       n-gram model file
//   synthetic:<path>   synthetic scorer JSON
//   tcp://host:port    remote scorer over TCP
//   stdio:<command>    remote scorer over a child's stdin/stdout
//   <path>             model file; the kind is sniffed from its contents
// Relative paths resolve against base_dir.
std::unique_ptr<Scorer> open_scorer(const std::string& spec,
                                    const std::filesystem::path& base_dir = {},
                                    int timeout_ms = 30000);

// Vocabulary and tokenizer carried by an n-gram model file, if the spec
// names one.
struct VocabularyInfo {
  Vocabulary vocab;
  TokenizerMode tokenizer;
};
std::optional<VocabularyInfo> vocabulary_of(const std::string& spec,
                                            const std::filesystem::path& base_dir = {});

}  // namespace delta::harness
