#include "delta/synthetic.h"

#include <fstream>

#include <json.hpp>

#include "delta/error.h"

namespace delta {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t infer_vocab_size(const SyntheticScorer::Rule& rule) {
  return std::visit(
      Overloaded{
          [](const SyntheticScorer::Constant& c) { return c.logits.size(); },
          [](const SyntheticScorer::Table& t) -> std::size_t {
            if (t.default_row) return t.default_row->size();
            if (!t.rows.empty()) return t.rows.begin()->second.size();
            throw Error(ErrorCode::kInvalidConfig, "table scorer has no rows");
          },
          [](const SyntheticScorer::BigramMatrix& m) { return m.rows.size(); },
      },
      rule);
}

void check_rows(const SyntheticScorer::Rule& rule, std::size_t v) {
  auto check = [v](const LogitVector& row) {
    if (row.size() != v) {
      throw Error(ErrorCode::kVocabMismatch, "synthetic row of length " +
                                                 std::to_string(row.size()) +
                                                 ", expected " + std::to_string(v));
    }
  };
  std::visit(Overloaded{
                 [&](const SyntheticScorer::Constant& c) { check(c.logits); },
                 [&](const SyntheticScorer::Table& t) {
                   for (const auto& [prefix, row] : t.rows) check(row);
                   if (t.default_row) check(*t.default_row);
                 },
                 [&](const SyntheticScorer::BigramMatrix& m) {
                   for (const auto& row : m.rows) check(row);
                 },
             },
             rule);
  if (v == 0) throw Error(ErrorCode::kInvalidConfig, "synthetic scorer with empty vocabulary");
}

}  // namespace

SyntheticScorer::SyntheticScorer(Rule rule, std::string label)
    : rule_(std::move(rule)), vocab_size_(infer_vocab_size(rule_)), label_(std::move(label)) {
  check_rows(rule_, vocab_size_);
}

SyntheticScorer SyntheticScorer::constant(std::vector<double> logits) {
  return SyntheticScorer(Constant{LogitVector(std::move(logits))}, "constant");
}

SyntheticScorer SyntheticScorer::bigram(std::vector<std::vector<double>> matrix) {
  BigramMatrix m;
  m.rows.reserve(matrix.size());
  for (auto& row : matrix) m.rows.emplace_back(std::move(row));
  return SyntheticScorer(std::move(m), "bigram");
}

SyntheticScorer SyntheticScorer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    const std::string rule = j.at("rule").get<std::string>();
    const std::string label = j.value("label", path.stem().string());
    if (rule == "constant") {
      return SyntheticScorer(Constant{LogitVector(j.at("logits").get<std::vector<double>>())},
                             label);
    }
    if (rule == "bigram") {
      BigramMatrix m;
      for (auto& row : j.at("matrix")) m.rows.emplace_back(row.get<std::vector<double>>());
      return SyntheticScorer(std::move(m), label);
    }
    if (rule == "table") {
      Table t;
      for (auto& row : j.at("rows")) {
        t.rows.emplace(row.at("prefix").get<std::vector<TokenId>>(),
                       LogitVector(row.at("logits").get<std::vector<double>>()));
      }
      if (j.contains("default")) {
        t.default_row = LogitVector(j.at("default").get<std::vector<double>>());
      }
      return SyntheticScorer(std::move(t), label);
    }
    throw Error(ErrorCode::kInvalidConfig, "unknown synthetic rule '" + rule + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIngestion, path.string() + ": " + e.what());
  }
}

LogitVector SyntheticScorer::score(std::span<const TokenId> prefix) const {
  return std::visit(
      Overloaded{
          [](const Constant& c) { return c.logits; },
          [&](const Table& t) {
            auto it = t.rows.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
            if (it != t.rows.end()) return it->second;
            if (t.default_row) return *t.default_row;
            throw Error(ErrorCode::kScorer, "table scorer has no row for prefix of length " +
                                                std::to_string(prefix.size()));
          },
          [&](const BigramMatrix& m) {
            const TokenId last = prefix.empty() ? 0 : prefix.back();
            if (last < 0 || static_cast<std::size_t>(last) >= m.rows.size()) {
              throw Error(ErrorCode::kVocabMismatch,
                          "token " + std::to_string(last) + " outside bigram matrix");
            }
            return m.rows[static_cast<std::size_t>(last)];
          },
      },
      rule_);
}

}  // namespace delta
