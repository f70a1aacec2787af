#include "delta/ngram.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "delta/error.h"

namespace delta {
namespace {

constexpr TokenId kPadSentinel = -1;

}  // namespace

std::size_t TokenSequenceHash::operator()(const std::vector<TokenId>& v) const noexcept {
  std::uint64_t h = 0x51ed270b27f1c3a5ULL;
  for (TokenId t : v) h = mix64(h ^ static_cast<std::uint32_t>(t));
  return static_cast<std::size_t>(h);
}

NGramModel::NGramModel(Vocabulary vocab, int order, double smoothing_k,
                       TokenizerMode tokenizer)
    : vocab_(std::move(vocab)),
      order_(order),
      smoothing_k_(smoothing_k),
      tokenizer_(tokenizer),
      pad_(vocab_.bos().value_or(kPadSentinel)) {
  if (order_ < 1) throw Error(ErrorCode::kInvalidConfig, "n-gram order must be >= 1");
  if (!(smoothing_k_ > 0.0) || !std::isfinite(smoothing_k_)) {
    throw Error(ErrorCode::kInvalidConfig, "smoothing_k must be > 0");
  }
}

std::vector<TokenId> NGramModel::context_of(std::span<const TokenId> prefix) const {
  const std::size_t ctx_len = static_cast<std::size_t>(order_ - 1);
  std::vector<TokenId> ctx(ctx_len, pad_);
  const std::size_t take = std::min(ctx_len, prefix.size());
  std::copy(prefix.end() - static_cast<std::ptrdiff_t>(take), prefix.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

void NGramModel::add_document(std::span<const TokenId> doc, std::size_t doc_index) {
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (!vocab_.contains(doc[i])) {
      throw Error(ErrorCode::kIngestion,
                  "document " + std::to_string(doc_index) + " position " + std::to_string(i) +
                      ": token " + std::to_string(doc[i]) + " outside vocabulary of size " +
                      std::to_string(vocab_.size()));
    }
  }
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto& entry = counts_[context_of(doc.first(i))];
    ++entry.next[doc[i]];
    ++entry.total;
  }
}

std::uint64_t NGramModel::count(std::span<const TokenId> context, TokenId next) const {
  auto it = counts_.find(std::vector<TokenId>(context.begin(), context.end()));
  if (it == counts_.end()) return 0;
  auto jt = it->second.next.find(next);
  return jt == it->second.next.end() ? 0 : jt->second;
}

double NGramModel::probability(std::span<const TokenId> prefix, TokenId next) const {
  const double v = static_cast<double>(vocab_.size());
  auto it = counts_.find(context_of(prefix));
  double c = 0.0;
  double total = 0.0;
  if (it != counts_.end()) {
    total = static_cast<double>(it->second.total);
    auto jt = it->second.next.find(next);
    if (jt != it->second.next.end()) c = static_cast<double>(jt->second);
  }
  return (c + smoothing_k_) / (total + smoothing_k_ * v);
}

LogitVector NGramModel::score(std::span<const TokenId> prefix) const {
  const double v = static_cast<double>(vocab_.size());
  auto it = counts_.find(context_of(prefix));
  const double total = it == counts_.end() ? 0.0 : static_cast<double>(it->second.total);
  const double log_denominator = std::log(total + smoothing_k_ * v);
  std::vector<double> logits(vocab_.size(), std::log(smoothing_k_) - log_denominator);
  if (it != counts_.end()) {
    for (const auto& [token, c] : it->second.next) {
      logits[static_cast<std::size_t>(token)] =
          std::log(static_cast<double>(c) + smoothing_k_) - log_denominator;
    }
  }
  return LogitVector(std::move(logits));
}

std::string NGramModel::label() const {
  return "ngram(order=" + std::to_string(order_) + ")";
}

void NGramModel::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "delta-ngram";
  j["version"] = 1;
  j["order"] = order_;
  j["smoothing_k"] = smoothing_k_;
  j["tokenizer"] = to_string(tokenizer_);
  j["vocab"] = std::vector<std::string>(vocab_.surfaces().begin(), vocab_.surfaces().end());
  j["bos"] = vocab_.bos() ? nlohmann::json(*vocab_.bos()) : nlohmann::json(nullptr);
  j["eos"] = vocab_.eos();

  std::vector<const std::vector<TokenId>*> keys;
  keys.reserve(counts_.size());
  for (const auto& [ctx, _] : counts_) keys.push_back(&ctx);
  std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });

  auto contexts = nlohmann::json::array();
  for (const auto* ctx : keys) {
    const auto& entry = counts_.at(*ctx);
    std::vector<std::pair<TokenId, std::uint64_t>> next(entry.next.begin(), entry.next.end());
    std::sort(next.begin(), next.end());
    auto counts = nlohmann::json::array();
    for (const auto& [t, c] : next) counts.push_back({t, c});
    contexts.push_back({{"ctx", *ctx}, {"counts", std::move(counts)}});
  }
  j["contexts"] = std::move(contexts);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump() << '\n';
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.at("format") != "delta-ngram") {
      throw Error(ErrorCode::kIngestion, path.string() + ": not an n-gram model file");
    }
    std::optional<TokenId> bos;
    if (!j.at("bos").is_null()) bos = j.at("bos").get<TokenId>();
    Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>(), bos,
                     j.at("eos").get<TokenId>());
    NGramModel model(std::move(vocab), j.at("order").get<int>(),
                     j.at("smoothing_k").get<double>(),
                     tokenizer_mode_from_string(j.value("tokenizer", "whitespace")));
    for (const auto& c : j.at("contexts")) {
      auto ctx = c.at("ctx").get<std::vector<TokenId>>();
      if (ctx.size() != static_cast<std::size_t>(model.order_ - 1)) {
        throw Error(ErrorCode::kIngestion, path.string() + ": context length mismatch");
      }
      auto& entry = model.counts_[std::move(ctx)];
      for (const auto& pair : c.at("counts")) {
        const auto t = pair.at(0).get<TokenId>();
        const auto n = pair.at(1).get<std::uint64_t>();
        if (!model.vocab_.contains(t)) {
          throw Error(ErrorCode::kIngestion, path.string() + ": token out of range");
        }
        entry.next[t] += n;
        entry.total += n;
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIngestion, path.string() + ": " + e.what());
  }
}

NGramModel train_ngram(std::span<const std::vector<TokenId>> corpus, int order,
                       double smoothing_k, const Vocabulary& vocab, TokenizerMode tokenizer) {
  NGramModel model(vocab, order, smoothing_k, tokenizer);
  for (std::size_t i = 0; i < corpus.size(); ++i) model.add_document(corpus[i], i);
  return model;
}

}  // namespace delta
