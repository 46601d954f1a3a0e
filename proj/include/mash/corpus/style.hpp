#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mash/corpus/document.hpp"

namespace mash::corpus {

struct SynonymEntry {
  std::string word;
  char pos = 'n';  // n noun, v verb, d past verb, a adjective, r adverb
  std::vector<std::pair<std::string, int>> synonyms;  // (synonym, corpus frequency)

  [[nodiscard]] const std::string& most_frequent() const;
};

/// Built-in word -> machine-register synonym table, shipped as data/synonyms.tsv.
class SynonymTable {
 public:
  SynonymTable() = default;
  explicit SynonymTable(std::vector<SynonymEntry> entries);

  static SynonymTable load(const std::filesystem::path& path);
  /// data/synonyms.tsv from the source tree (or $MASH_DATA_DIR).
  static SynonymTable load_default();

  [[nodiscard]] const SynonymEntry* find(const std::string& word) const;
  [[nodiscard]] const std::vector<SynonymEntry>& entries() const { return entries_; }
  [[nodiscard]] std::vector<std::string> words_with_pos(char pos) const;
  [[nodiscard]] bool is_synonym(const std::string& token) const;
  [[nodiscard]] std::size_t size() const { return entries_.size(); }

 private:
  std::vector<SynonymEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> reverse_;
};

std::filesystem::path default_data_dir();

/// Discourse connectors inserted at sentence starts (without the trailing comma).
const std::vector<TokenSeq>& connectors();
/// Contraction -> expanded tokens, e.g. "don't" -> {"do", "not"}.
const std::map<std::string, TokenSeq>& contractions();
bool is_stopword(const std::string& token);
/// Alphabetic, not a stopword, not a contraction.
bool is_content_word(const std::string& token);

struct MachineStyleConfig {
  double p_connector = 0.3;
  double p_synonym = 0.2;
  bool regularize_punctuation = true;
  bool expand_contractions = true;
  double min_content_overlap = 0.6;
};

/// Rewrites a human document into the synthetic machine register.
/// Deterministic in (doc.id, seed).
Document machine_style(const Document& x_human, std::uint64_t seed, const SynonymTable& table,
                       const MachineStyleConfig& cfg = {});

/// Fraction of source content words (multiset) preserved in the output.
double content_overlap(const TokenSeq& source, const TokenSeq& output);

struct SynthConfig {
  std::size_t sentences_per_doc = 3;
  double p_expanded = 0.15;  // a human writes "do not" instead of "don't"
  double zipf_exponent = 1.0;
  std::string id_prefix = "h";
};

/// Template-based human-register corpus with Zipf-distributed content words.
std::vector<Document> synthesize_human_corpus(std::size_t n, std::uint64_t seed, const SynonymTable& table,
                                              const SynthConfig& cfg = {});

}  // namespace mash::corpus
