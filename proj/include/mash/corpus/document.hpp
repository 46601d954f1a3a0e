#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mash/common.hpp"

namespace mash::corpus {

struct Document {
  std::string id;
  std::string text;
  TokenSeq tokens;  // always tokenize(text)
  Label label = Label::Unknown;
  std::string source;

  static Document from_text(std::string id, std::string text, Label label, std::string source);
  static Document from_tokens(std::string id, TokenSeq tokens, Label label, std::string source);
};

struct ParallelPair {
  Document x_ai;
  Document x_human;
  double d_ai = 0.0;
  double d_human = 0.0;
};

// JSONL I/O. One object per LF-terminated line, UTF-8.
//   documents: {"id", "text", "label", "source"}
//   pairs:     {"id", "ai_text", "human_text", "d_ai", "d_human"}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs);
std::vector<Document> read_documents(const std::filesystem::path& path);

void write_pairs(const std::filesystem::path& path, const std::vector<ParallelPair>& pairs);
std::vector<ParallelPair> read_pairs(const std::filesystem::path& path);

std::string document_to_json_line(const Document& doc);
std::string pair_to_json_line(const ParallelPair& pair);

/// Reads non-empty lines of a text file.
std::vector<std::string> read_lines(const std::filesystem::path& path);
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

}  // namespace mash::corpus
