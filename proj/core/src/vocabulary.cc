#include "delta/vocabulary.h"

#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "delta/error.h"

namespace delta {
namespace {

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r') ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::string to_string(TokenizerMode mode) {
  return mode == TokenizerMode::kByte ? "byte" : "whitespace";
}

TokenizerMode tokenizer_mode_from_string(const std::string& s) {
  if (s == "whitespace") return TokenizerMode::kWhitespace;
  if (s == "byte") return TokenizerMode::kByte;
  throw Error(ErrorCode::kInvalidConfig, "unknown tokenizer mode '" + s + "'");
}

Vocabulary::Vocabulary(std::vector<std::string> surfaces, std::optional<TokenId> bos,
                       TokenId eos)
    : surfaces_(std::move(surfaces)), bos_(bos), eos_(eos) {
  if (surfaces_.empty()) throw Error(ErrorCode::kIngestion, "empty vocabulary");
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    auto [it, inserted] = index_.emplace(surfaces_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw Error(ErrorCode::kIngestion, "duplicate vocabulary surface '" + surfaces_[i] +
                                             "' at ids " + std::to_string(it->second) +
                                             " and " + std::to_string(i));
    }
  }
  if (!contains(eos_)) throw Error(ErrorCode::kIngestion, "eos id out of range");
  if (bos_ && !contains(*bos_)) throw Error(ErrorCode::kIngestion, "bos id out of range");
}

std::string byte_surface(unsigned char b) {
  if (b >= 0x21 && b <= 0x7e) return std::string(1, static_cast<char>(b));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02X>", b);
  return buf;
}

Vocabulary Vocabulary::bytes() {
  std::vector<std::string> surfaces;
  surfaces.reserve(258);
  for (int b = 0; b < 256; ++b) surfaces.push_back(byte_surface(static_cast<unsigned char>(b)));
  surfaces.emplace_back(kBosSurface);
  surfaces.emplace_back(kEosSurface);
  return Vocabulary(std::move(surfaces), 256, 257);
}

Vocabulary Vocabulary::from_words(std::span<const std::string> documents) {
  std::vector<std::string> surfaces{std::string(kBosSurface), std::string(kEosSurface)};
  std::unordered_set<std::string_view> seen{kBosSurface, kEosSurface};
  std::vector<std::string> words;
  for (const auto& doc : documents) {
    for (auto word : split_whitespace(doc)) words.emplace_back(word);
  }
  for (const auto& w : words) {
    if (seen.insert(w).second) surfaces.push_back(w);
  }
  return Vocabulary(std::move(surfaces), 0, 1);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  std::optional<TokenId> bos;
  std::optional<TokenId> eos;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i] == kBosSurface) bos = static_cast<TokenId>(i);
    if (lines[i] == kEosSurface) eos = static_cast<TokenId>(i);
  }
  if (!eos) {
    throw Error(ErrorCode::kIngestion, path.string() + ": vocabulary has no <eos> line");
  }
  return Vocabulary(std::move(lines), bos, *eos);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& s : surfaces_) out << s << '\n';
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (!contains(id)) {
    throw Error(ErrorCode::kVocabMismatch, "token id " + std::to_string(id) +
                                               " outside vocabulary of size " +
                                               std::to_string(size()));
  }
  return surfaces_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text,
                              TokenizerMode mode) {
  std::vector<TokenId> out;
  if (mode == TokenizerMode::kByte) {
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      auto id = vocab.find(byte_surface(static_cast<unsigned char>(text[i])));
      if (!id) {
        throw Error(ErrorCode::kIngestion, "byte at position " + std::to_string(i) +
                                               " not in vocabulary");
      }
      out.push_back(*id);
    }
    return out;
  }
  auto words = split_whitespace(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto id = vocab.find(words[i]);
    if (!id) {
      throw Error(ErrorCode::kIngestion, "word " + std::to_string(i) + " '" +
                                             std::string(words[i]) + "' not in vocabulary");
    }
    out.push_back(*id);
  }
  return out;
}

std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> tokens,
                       TokenizerMode mode) {
  std::string out;
  for (TokenId t : tokens) {
    if (t == vocab.eos() || (vocab.bos() && t == *vocab.bos())) continue;
    const std::string& s = vocab.surface(t);
    if (mode == TokenizerMode::kByte) {
      if (s.size() == 1) {
        out += s;
      } else if (s.size() == 6 && s.starts_with("<0x")) {
        out += static_cast<char>(std::stoi(s.substr(3, 2), nullptr, 16));
      } else {
        out += s;
      }
    } else {
      if (!out.empty()) out += ' ';
      out += s;
    }
  }
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::vector<TokenId>> load_corpus(const std::filesystem::path& path,
                                              const Vocabulary& vocab, TokenizerMode mode,
                                              bool append_eos) {
  auto lines = read_lines(path);
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      auto tokens = tokenize(vocab, lines[i], mode);
      if (tokens.empty() && mode == TokenizerMode::kWhitespace) continue;
      if (append_eos) tokens.push_back(vocab.eos());
      docs.push_back(std::move(tokens));
    } catch (const Error& e) {
      throw Error(ErrorCode::kIngestion,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return docs;
}

}  // namespace delta
