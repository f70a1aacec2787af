#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "delta/core.h"

namespace delta {

enum class TokenizerMode { kWhitespace, kByte };

std::string to_string(TokenizerMode mode);
TokenizerMode tokenizer_mode_from_string(const std::string& s);

inline constexpr std::string_view kBosSurface = "<bos>";
inline constexpr std::string_view kEosSurface = "<eos>";

// TokenId <-> surface string mapping shared by every scorer in an ensemble.
class Vocabulary {
 public:
  // Throws kIngestion on duplicate surfaces or out-of-range specials.
  Vocabulary(std::vector<std::string> surfaces, std::optional<TokenId> bos, TokenId eos);

  // 256 byte tokens followed by <bos> (256) and <eos> (257).
  static Vocabulary bytes();
  // <bos> (0), <eos> (1), then every distinct whitespace-separated word of
  // the given documents in first-appearance order.
  static Vocabulary from_words(std::span<const std::string> documents);
  // One surface per line, line number = TokenId. <bos>/<eos> lines mark the
  // specials; <eos> is required.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return surfaces_.size(); }
  const std::string& surface(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;
  std::optional<TokenId> bos() const noexcept { return bos_; }
  TokenId eos() const noexcept { return eos_; }
  std::span<const std::string> surfaces() const noexcept { return surfaces_; }

  bool contains(TokenId id) const noexcept {
    return id >= 0 && static_cast<std::size_t>(id) < surfaces_.size();
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.surfaces_ == b.surfaces_ && a.bos_ == b.bos_ && a.eos_ == b.eos_;
  }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> bos_;
  TokenId eos_;
};

// Splits text into tokens of the given vocabulary. Throws kIngestion naming
// the offending word/byte position when a token is not in the vocabulary.
std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text,
                              TokenizerMode mode);

// Inverse of tokenize; specials are dropped.
std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> tokens,
                       TokenizerMode mode);

// Surface of a byte token: printable ASCII stands for itself, anything else
// is written as <0xHH>.
std::string byte_surface(unsigned char b);

// Reads one document per line. Each document is tokenized and, when
// append_eos is set, terminated with the vocabulary's eos. Errors carry the
// 1-based line number.
std::vector<std::vector<TokenId>> load_corpus(const std::filesystem::path& path,
                                              const Vocabulary& vocab, TokenizerMode mode,
                                              bool append_eos = true);

std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace delta
