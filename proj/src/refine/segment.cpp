#include "mash/refine/segment.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "mash/common.hpp"

namespace mash::refine {
namespace {

constexpr std::array<std::string_view, 3> kAbbreviations{"e.g.", "i.e.", "etc."};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

// Does the word ending at `end` (exclusive) spell a guarded abbreviation?
bool ends_with_abbreviation(std::string_view text, std::size_t start, std::size_t end) {
  std::size_t w = end;
  while (w > start && !is_space(text[w - 1])) {
    --w;
  }
  std::string word(text.substr(w, end - w));
  std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
  while (!word.empty() && (word.front() == '(' || word.front() == '"')) {
    word.erase(word.begin());
  }
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace

std::vector<std::string> Segmentation::sentences() const {
  std::vector<std::string> out;
  out.reserve(spans.size());
  for (const auto& s : spans) {
    out.emplace_back(text.substr(s.begin, s.end - s.begin));
  }
  return out;
}

Segmentation segment(std::string_view text) {
  Segmentation seg{std::string(text), {}};
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i])) {
      ++i;
    }
    if (i >= n) {
      break;
    }
    const std::size_t begin = i;
    std::size_t end = n;
    while (i < n) {
      if (is_terminal(text[i])) {
        std::size_t j = i;
        while (j < n && is_terminal(text[j])) {
          ++j;
        }
        if ((j == n || is_space(text[j])) && !ends_with_abbreviation(text, begin, j)) {
          end = j;
          i = j;
          break;
        }
        i = j;
        continue;
      }
      ++i;
    }
    if (end == n) {
      // trailing sentence without terminal punctuation: trim its whitespace
      end = n;
      while (end > begin && is_space(text[end - 1])) {
        --end;
      }
      i = n;
    }
    seg.spans.push_back({begin, end});
  }
  return seg;
}

std::vector<std::string> split_sentences(std::string_view text) { return segment(text).sentences(); }

std::string reassemble(const Segmentation& seg, const std::vector<std::string>& sentences) {
  if (sentences.size() != seg.spans.size()) {
    throw ContractViolation("reassemble: one replacement per sentence required");
  }
  std::string out;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < seg.spans.size(); ++k) {
    out.append(seg.text, cursor, seg.spans[k].begin - cursor);
    out.append(sentences[k]);
    cursor = seg.spans[k].end;
  }
  out.append(seg.text, cursor, std::string::npos);
  return out;
}

}  // namespace mash::refine
