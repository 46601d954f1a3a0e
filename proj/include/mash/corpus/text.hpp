#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mash/common.hpp"

namespace mash::corpus {

/// Lowercases, splits on whitespace and detaches punctuation into separate
/// tokens. Apostrophes and hyphens inside a word stay with the word, so
/// contractions are single tokens.
TokenSeq tokenize(std::string_view text);

/// Joins tokens back into display text: no space before closing punctuation,
/// sentence-initial capitalization and a capital "I". tokenize(detokenize(t)) == t.
std::string detokenize(std::span<const std::string> tokens);

bool is_punctuation(std::string_view token);
/// ".", "!", "?", "..." or the ellipsis character.
bool is_terminal_punctuation(std::string_view token);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kBos = 2;
  static constexpr std::int32_t kEos = 3;

  Vocabulary();

  /// Reserved tokens first, then tokens with count >= min_count by descending
  /// frequency (ties lexicographic).
  static Vocabulary build(std::span<const TokenSeq> corpus, std::size_t min_count = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  [[nodiscard]] std::int32_t id(const std::string& token) const;
  [[nodiscard]] const std::string& token(std::int32_t id) const;
  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] bool contains(const std::string& token) const { return index_.contains(token); }

  [[nodiscard]] Ids encode(std::span<const std::string> tokens) const;
  /// Drops pad, bos and eos; unknown ids decode as "<unk>".
  [[nodiscard]] TokenSeq decode(std::span<const std::int32_t> ids) const;

  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  [[nodiscard]] std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

}  // namespace mash::corpus
