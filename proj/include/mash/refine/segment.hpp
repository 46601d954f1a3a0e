#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mash::refine {

/// Half-open byte range [begin, end) of one sentence.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Sentences of a text plus the whitespace between them, so that
/// reassemble(seg, seg.sentences()) reproduces the text byte for byte.
struct Segmentation {
  std::string text;
  std::vector<Span> spans;

  [[nodiscard]] std::vector<std::string> sentences() const;
};

/// Splits after a run of '.', '!' or '?' that is followed by whitespace or
/// the end of the text, except after "e.g.", "i.e." and "etc.".
Segmentation segment(std::string_view text);
std::vector<std::string> split_sentences(std::string_view text);

/// Rebuilds the text with each sentence replaced by the given string,
/// keeping the original inter-sentence whitespace.
std::string reassemble(const Segmentation& seg, const std::vector<std::string>& sentences);

}  // namespace mash::refine
