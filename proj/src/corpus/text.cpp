#include "mash/corpus/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace mash::corpus {
namespace {

constexpr std::string_view kEllipsis = "\xE2\x80\xA6";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct_char(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '"':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

bool no_space_before(std::string_view t) {
  return t == "." || t == "," || t == "!" || t == "?" || t == ";" || t == ":" || t == ")" || t == "..." ||
         t == kEllipsis;
}

}  // namespace

bool is_punctuation(std::string_view token) {
  if (token == kEllipsis || token == "...") {
    return true;
  }
  return token.size() == 1 && is_punct_char(token[0]);
}

bool is_terminal_punctuation(std::string_view token) {
  return token == "." || token == "!" || token == "?" || token == "..." || token == kEllipsis;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(std::move(word));
      word.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    const char c = text[i];
    if (is_space(c)) {
      flush();
      ++i;
      continue;
    }
    if (text.substr(i, kEllipsis.size()) == kEllipsis) {
      flush();
      out.emplace_back(kEllipsis);
      i += kEllipsis.size();
      continue;
    }
    if (c == '.') {
      flush();
      std::size_t j = i;
      while (j < text.size() && text[j] == '.') {
        ++j;
      }
      out.emplace_back(j - i >= 2 ? "..." : ".");
      i = j;
      continue;
    }
    if (is_punct_char(c)) {
      flush();
      out.emplace_back(1, c);
      ++i;
      continue;
    }
    word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    ++i;
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool sentence_start = true;
  bool after_open = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.empty()) {
      continue;
    }
    const bool dot_run = i > 0 && !tokens[i - 1].empty() && tokens[i - 1].back() == '.' && t.front() == '.';
    if (i > 0 && (!no_space_before(t) || dot_run) && !after_open) {
      out.push_back(' ');
    }
    std::string w = t;
    if (w == "i" || w.starts_with("i'")) {
      w[0] = 'I';
    } else if (sentence_start && !is_punctuation(w)) {
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    }
    if (!is_punctuation(w)) {
      sentence_start = false;
    }
    if (is_terminal_punctuation(t)) {
      sentence_start = true;
    }
    after_open = t == "(";
    out += w;
  }
  return out;
}

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<std::int32_t>(i));
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  if (tokens.size() < v.tokens_.size() || !std::equal(v.tokens_.begin(), v.tokens_.end(), tokens.begin())) {
    throw ConfigError("vocabulary must start with the reserved tokens");
  }
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw ConfigError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const TokenSeq> corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) {
      ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> entries(counts.begin(), counts.end());
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  std::vector<std::string> tokens = v.tokens_;
  for (auto& [tok, n] : entries) {
    if (n >= min_count && !v.index_.contains(tok)) {
      tokens.push_back(tok);
    }
  }
  return from_tokens(std::move(tokens));
}

std::int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractViolation("vocabulary id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Ids Vocabulary::encode(std::span<const std::string> tokens) const {
  Ids out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    out.push_back(id(t));
  }
  return out;
}

TokenSeq Vocabulary::decode(std::span<const std::int32_t> ids) const {
  TokenSeq out;
  for (auto i : ids) {
    if (i == kPad || i == kBos || i == kEos) {
      continue;
    }
    out.push_back(token(i));
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    tokens.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write vocabulary: " + path.string());
  }
  out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read vocabulary: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

}  // namespace mash::corpus
