#include "mash/corpus/style.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "mash/corpus/text.hpp"
#include "mash/rng.hpp"

#ifndef MASH_DATA_DIR
#define MASH_DATA_DIR "data"
#endif

namespace mash::corpus {
namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{
      "the",  "a",      "an",   "my",    "our",    "their", "this",  "that", "i",     "we",   "they",
      "you",  "he",     "she",  "it",    "is",     "was",   "are",   "am",   "be",    "to",   "of",
      "in",   "at",     "near", "with",  "for",    "from",  "about", "after", "before", "and", "or",
      "but",  "so",     "do",   "does",  "did",    "not",   "will",  "can",  "cannot", "have", "has",
      "had",  "what",   "why",  "how",   "going",  "on",    "by",    "moreover", "furthermore", "conclusion",
      "his",  "her",    "them", "us",    "me"};
  return words;
}

std::vector<std::string> split_tab(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) {
    out.push_back(field);
  }
  return out;
}

}  // namespace

const std::string& SynonymEntry::most_frequent() const {
  auto it = std::max_element(synonyms.begin(), synonyms.end(),
                             [](const auto& a, const auto& b) { return a.second < b.second; });
  return it->first;
}

SynonymTable::SynonymTable(std::vector<SynonymEntry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].synonyms.empty()) {
      throw ConfigError("synonym table: '" + entries_[i].word + "' has no synonyms");
    }
    if (!index_.emplace(entries_[i].word, i).second) {
      throw ConfigError("synonym table: duplicate word '" + entries_[i].word + "'");
    }
    for (const auto& [syn, freq] : entries_[i].synonyms) {
      reverse_.emplace(syn, entries_[i].word);
    }
  }
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::vector<SynonymEntry> entries;
  for (const auto& line : read_lines(path)) {
    if (line.starts_with('#')) {
      continue;
    }
    const auto fields = split_tab(line);
    if (fields.size() != 3 || fields[1].size() != 1) {
      throw ConfigError("synonym table: malformed line '" + line + "'");
    }
    SynonymEntry e;
    e.word = fields[0];
    e.pos = fields[1][0];
    std::stringstream ss(fields[2]);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError("synonym table: missing frequency in '" + item + "'");
      }
      e.synonyms.emplace_back(item.substr(0, colon), std::stoi(item.substr(colon + 1)));
    }
    entries.push_back(std::move(e));
  }
  return SynonymTable(std::move(entries));
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("MASH_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return MASH_DATA_DIR;
}

SynonymTable SynonymTable::load_default() { return load(default_data_dir() / "synonyms.tsv"); }

const SynonymEntry* SynonymTable::find(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::vector<std::string> SynonymTable::words_with_pos(char pos) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.pos == pos) {
      out.push_back(e.word);
    }
  }
  return out;
}

bool SynonymTable::is_synonym(const std::string& token) const { return reverse_.contains(token); }

const std::vector<TokenSeq>& connectors() {
  static const std::vector<TokenSeq> list{{"moreover"}, {"furthermore"}, {"in", "conclusion"}};
  return list;
}

const std::map<std::string, TokenSeq>& contractions() {
  static const std::map<std::string, TokenSeq> table{
      {"don't", {"do", "not"}},     {"doesn't", {"does", "not"}}, {"didn't", {"did", "not"}},
      {"can't", {"cannot"}},        {"won't", {"will", "not"}},   {"isn't", {"is", "not"}},
      {"wasn't", {"was", "not"}},   {"it's", {"it", "is"}},       {"that's", {"that", "is"}},
      {"we're", {"we", "are"}},     {"they're", {"they", "are"}}, {"you're", {"you", "are"}},
      {"i'm", {"i", "am"}},         {"i've", {"i", "have"}},      {"we've", {"we", "have"}},
  };
  return table;
}

bool is_stopword(const std::string& token) { return stopwords().contains(token); }

bool is_content_word(const std::string& token) {
  if (token.empty() || is_stopword(token) || contractions().contains(token)) {
    return false;
  }
  return std::all_of(token.begin(), token.end(),
                     [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '-'; });
}

double content_overlap(const TokenSeq& source, const TokenSeq& output) {
  std::map<std::string, int> remaining;
  std::size_t total = 0;
  for (const auto& t : source) {
    if (is_content_word(t)) {
      ++remaining[t];
      ++total;
    }
  }
  if (total == 0) {
    return 1.0;
  }
  std::size_t kept = 0;
  for (const auto& t : output) {
    auto it = remaining.find(t);
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++kept;
    }
  }
  return static_cast<double>(kept) / static_cast<double>(total);
}

Document machine_style(const Document& x_human, std::uint64_t seed, const SynonymTable& table,
                       const MachineStyleConfig& cfg) {
  Rng rng(derive_seed(seed, fnv1a(x_human.id)));
  TokenSeq tokens;

  // (c) collapse runs of terminal punctuation into a single "."
  for (const auto& t : x_human.tokens) {
    if (cfg.regularize_punctuation && is_terminal_punctuation(t)) {
      if (tokens.empty() || tokens.back() != ".") {
        tokens.emplace_back(".");
      }
      continue;
    }
    tokens.push_back(t);
  }

  // (d) expand contractions
  if (cfg.expand_contractions) {
    TokenSeq expanded;
    for (const auto& t : tokens) {
      if (auto it = contractions().find(t); it != contractions().end()) {
        expanded.insert(expanded.end(), it->second.begin(), it->second.end());
      } else {
        expanded.push_back(t);
      }
    }
    tokens = std::move(expanded);
  }

  // (b) synonym substitution, capped so the content overlap stays above the floor
  std::size_t n_content = 0;
  for (const auto& t : x_human.tokens) {
    n_content += is_content_word(t) ? 1 : 0;
  }
  const auto max_replacements =
      static_cast<std::size_t>(std::floor((1.0 - cfg.min_content_overlap) * static_cast<double>(n_content) + 1e-9));
  std::size_t replaced = 0;
  for (auto& t : tokens) {
    const SynonymEntry* e = is_content_word(t) ? table.find(t) : nullptr;
    if (e == nullptr) {
      continue;
    }
    const bool draw = rng.bernoulli(cfg.p_synonym);
    if (draw && replaced < max_replacements) {
      t = e->most_frequent();
      ++replaced;
    }
  }

  // (a) discourse connectors at sentence starts
  TokenSeq out;
  bool at_start = true;
  for (const auto& t : tokens) {
    if (at_start && !is_punctuation(t)) {
      if (rng.bernoulli(cfg.p_connector)) {
        const auto& c = connectors()[rng.below(connectors().size())];
        out.insert(out.end(), c.begin(), c.end());
        out.emplace_back(",");
      }
      at_start = false;
    }
    out.push_back(t);
    if (is_terminal_punctuation(t)) {
      at_start = true;
    }
  }

  return Document::from_tokens(x_human.id + "#ai", std::move(out), Label::AI,
                               "machine_style:" + std::to_string(seed));
}

namespace {

struct Slots {
  std::vector<std::string> n, v, d, a, r;
};

const std::vector<std::vector<std::string>>& templates() {
  // Lowercase single letters are synonym-table slots; uppercase names are closed classes.
  static const std::vector<std::vector<std::string>> t{
      {"PRON", "d", "DET", "n", "."},
      {"DET", "n", "was", "r", "a", "."},
      {"PRON", "NEG", "v", "DET", "n", "."},
      {"CPRON", "a", "to", "v", "DET", "n", "."},
      {"BEPRON", "going", "to", "v", "DET", "n", "PREP", "DET", "n", "."},
      {"why", "QNEG", "PRON", "v", "DET", "n", "?"},
      {"what", "ART", "a", "n", "!"},
      {"PRON", "d", "DET", "a", "n", "PREP", "DET", "n", "."},
      {"PRON3", "r", "d", "DET", "n", "."},
      {"DET", "n", "ISNEG", "a", "!"},
      {"PRON", "v", "to", "v", "DET", "n", "r", "."},
      {"HAVE", "d", "DET", "n", "."},
      {"PRON3", "DOESNEG", "v", "DET", "a", "n", "."},
      {"did", "PRON", "v", "DET", "n", "?"},
  };
  return t;
}

const std::map<std::string, std::vector<std::string>>& closed_classes() {
  static const std::map<std::string, std::vector<std::string>> c{
      {"PRON", {"i", "we", "they", "you"}},
      {"PRON3", {"he", "she"}},
      {"ART", {"a"}},
      {"DET", {"the", "my", "our", "their", "this", "that"}},
      {"PREP", {"in", "at", "near", "with", "for", "from", "about", "after", "before"}},
      {"NEG", {"don't", "didn't", "can't", "won't"}},
      {"QNEG", {"didn't", "don't", "can't"}},
      {"CPRON", {"it's", "that's"}},
      {"BEPRON", {"we're", "they're", "i'm", "you're"}},
      {"ISNEG", {"isn't", "wasn't"}},
      {"HAVE", {"i've", "we've"}},
      {"DOESNEG", {"doesn't"}},
  };
  return c;
}

std::vector<double> zipf_weights(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
  }
  return w;
}

}  // namespace

std::vector<Document> synthesize_human_corpus(std::size_t n, std::uint64_t seed, const SynonymTable& table,
                                              const SynthConfig& cfg) {
  const std::map<char, std::vector<std::string>> open{{'n', table.words_with_pos('n')},
                                                      {'v', table.words_with_pos('v')},
                                                      {'d', table.words_with_pos('d')},
                                                      {'a', table.words_with_pos('a')},
                                                      {'r', table.words_with_pos('r')}};
  std::map<char, std::vector<double>> weights;
  for (const auto& [pos, words] : open) {
    if (words.empty()) {
      throw ConfigError(std::string("synonym table has no words with pos '") + pos + "'");
    }
    weights[pos] = zipf_weights(words.size(), cfg.zipf_exponent);
  }
  // Question/exclamation templates are drawn less often than statements.
  std::vector<double> template_weights;
  for (const auto& t : templates()) {
    const bool marked = t.back() != ".";
    template_weights.push_back(marked ? 0.6 : 1.0);
  }

  std::vector<Document> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    TokenSeq tokens;
    for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
      const auto& tpl = templates()[rng.categorical(std::span<const double>(template_weights))];
      for (const auto& slot : tpl) {
        if (slot.size() == 1 && open.contains(slot[0])) {
          const auto& words = open.at(slot[0]);
          tokens.push_back(words[rng.categorical(std::span<const double>(weights.at(slot[0])))]);
        } else if (auto it = closed_classes().find(slot); it != closed_classes().end()) {
          const std::string& w = it->second[rng.below(it->second.size())];
          auto c = contractions().find(w);
          if (c != contractions().end() && rng.bernoulli(cfg.p_expanded)) {
            tokens.insert(tokens.end(), c->second.begin(), c->second.end());
          } else {
            tokens.push_back(w);
          }
        } else {
          tokens.push_back(slot);
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "%06zu", i);
    docs.push_back(Document::from_tokens(cfg.id_prefix + id, std::move(tokens), Label::Human,
                                         "synthetic:" + std::to_string(seed)));
  }
  return docs;
}

}  // namespace mash::corpus
