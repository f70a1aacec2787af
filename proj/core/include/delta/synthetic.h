#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "delta/scorer.h"

namespace delta {

// Rule-based scorers used as deterministic test backends.
class SyntheticScorer final : public Scorer {
 public:
  struct Constant {
    LogitVector logits;
  };
  // Exact-prefix lookup. A missing prefix returns default_row when set,
  // otherwise raises kScorer.
  struct Table {
    std::map<std::vector<TokenId>, LogitVector> rows;
    std::optional<LogitVector> default_row;
  };
  // V x V matrix; the row of the last prefix token is returned. The empty
  // prefix maps to row 0.
  struct BigramMatrix {
    std::vector<LogitVector> rows;
  };
  using Rule = std::variant<Constant, Table, BigramMatrix>;

  explicit SyntheticScorer(Rule rule, std::string label = "synthetic");

  static SyntheticScorer constant(std::vector<double> logits);
  static SyntheticScorer bigram(std::vector<std::vector<double>> matrix);

  // JSON: {"rule":"constant","logits":[...]} |
  //       {"rule":"bigram","matrix":[[...],...]} |
  //       {"rule":"table","vocab_size":V,"rows":[{"prefix":[...],"logits":[...]}],
  //        "default":[...]?}
  static SyntheticScorer load(const std::filesystem::path& path);

  std::size_t vocab_size() const override { return vocab_size_; }
  LogitVector score(std::span<const TokenId> prefix) const override;
  std::string label() const override { return label_; }

  const Rule& rule() const noexcept { return rule_; }

 private:
  Rule rule_;
  std::size_t vocab_size_ = 0;
  std::string label_;
};

}  // namespace delta
