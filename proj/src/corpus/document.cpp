#include "mash/corpus/document.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "mash/corpus/text.hpp"

namespace mash::corpus {

using nlohmann::json;

Document Document::from_text(std::string id, std::string text, Label label, std::string source) {
  Document d;
  d.id = std::move(id);
  d.tokens = tokenize(text);
  d.text = std::move(text);
  d.label = label;
  d.source = std::move(source);
  return d;
}

Document Document::from_tokens(std::string id, TokenSeq tokens, Label label, std::string source) {
  Document d;
  d.id = std::move(id);
  d.text = detokenize(tokens);
  d.tokens = std::move(tokens);
  d.label = label;
  d.source = std::move(source);
  return d;
}

std::string document_to_json_line(const Document& doc) {
  json j = json::object();
  j["id"] = doc.id;
  j["text"] = doc.text;
  j["label"] = std::string(to_string(doc.label));
  j["source"] = doc.source;
  return j.dump();
}

std::string pair_to_json_line(const ParallelPair& pair) {
  json j = json::object();
  j["id"] = pair.x_human.id;
  j["ai_text"] = pair.x_ai.text;
  j["human_text"] = pair.x_human.text;
  j["d_ai"] = pair.d_ai;
  j["d_human"] = pair.d_human;
  return j.dump();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      lines.push_back(std::move(line));
    }
  }
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  for (const auto& l : lines) {
    out << l << '\n';
  }
}

void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::vector<std::string> lines;
  lines.reserve(docs.size());
  for (const auto& d : docs) {
    lines.push_back(document_to_json_line(d));
  }
  write_lines(path, lines);
}

std::vector<Document> read_documents(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for (const auto& line : read_lines(path)) {
    try {
      const json j = json::parse(line);
      docs.push_back(Document::from_text(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                                         label_from_string(j.value("label", std::string("unknown"))),
                                         j.value("source", std::string{})));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": malformed document line: " + e.what());
    }
  }
  return docs;
}

void write_pairs(const std::filesystem::path& path, const std::vector<ParallelPair>& pairs) {
  std::vector<std::string> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) {
    lines.push_back(pair_to_json_line(p));
  }
  write_lines(path, lines);
}

std::vector<ParallelPair> read_pairs(const std::filesystem::path& path) {
  std::vector<ParallelPair> pairs;
  for (const auto& line : read_lines(path)) {
    try {
      const json j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      ParallelPair p;
      p.x_human = Document::from_text(id, j.at("human_text").get<std::string>(), Label::Human, "pairs");
      p.x_ai = Document::from_text(id + "#ai", j.at("ai_text").get<std::string>(), Label::AI, "pairs");
      p.d_ai = j.at("d_ai").get<double>();
      p.d_human = j.at("d_human").get<double>();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": malformed pair line: " + e.what());
    }
  }
  return pairs;
}

}  // namespace mash::corpus
