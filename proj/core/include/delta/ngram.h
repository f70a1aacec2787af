#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "delta/scorer.h"
#include "delta/vocabulary.h"

namespace delta {

struct TokenSequenceHash {
  std::size_t operator()(const std::vector<TokenId>& v) const noexcept;
};

// Add-k smoothed n-gram language model. Contexts are the last order-1 tokens,
// left-padded with bos (or a reserved pad symbol when the vocabulary has no
// bos). score() returns exact log-probabilities, so softmax at temperature 1
// reproduces the smoothed conditional distribution.
class NGramModel final : public Scorer {
 public:
  struct ContextCounts {
    std::unordered_map<TokenId, std::uint64_t> next;
    std::uint64_t total = 0;
  };

  NGramModel(Vocabulary vocab, int order, double smoothing_k,
             TokenizerMode tokenizer = TokenizerMode::kWhitespace);

  // Adds every length-order window of the document (with padding).
  // Throws kIngestion naming the document and position of an out-of-range token.
  void add_document(std::span<const TokenId> doc, std::size_t doc_index = 0);

  std::size_t vocab_size() const override { return vocab_.size(); }
  LogitVector score(std::span<const TokenId> prefix) const override;
  std::string label() const override;

  const Vocabulary& vocab() const noexcept { return vocab_; }
  int order() const noexcept { return order_; }
  double smoothing_k() const noexcept { return smoothing_k_; }
  TokenizerMode tokenizer() const noexcept { return tokenizer_; }
  TokenId pad_token() const noexcept { return pad_; }

  // Count of `next` following exactly `context` (length order-1, padded).
  std::uint64_t count(std::span<const TokenId> context, TokenId next) const;
  double probability(std::span<const TokenId> prefix, TokenId next) const;
  std::vector<TokenId> context_of(std::span<const TokenId> prefix) const;

  void save(const std::filesystem::path& path) const;
  static NGramModel load(const std::filesystem::path& path);

 private:
  Vocabulary vocab_;
  int order_;
  double smoothing_k_;
  TokenizerMode tokenizer_;
  TokenId pad_;
  std::unordered_map<std::vector<TokenId>, ContextCounts, TokenSequenceHash> counts_;
};

NGramModel train_ngram(std::span<const std::vector<TokenId>> corpus, int order,
                       double smoothing_k, const Vocabulary& vocab,
                       TokenizerMode tokenizer = TokenizerMode::kWhitespace);

}  // namespace delta
