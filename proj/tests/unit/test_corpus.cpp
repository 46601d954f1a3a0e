#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "mash/corpus/pairs.hpp"
#include "mash/corpus/style.hpp"
#include "mash/corpus/text.hpp"
#include "mash/detectors/supervised.hpp"

using namespace mash;
using corpus::Document;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("mash_unit_" + name);
}

const corpus::SynonymTable& table() {
  static const auto t = corpus::SynonymTable::load_default();
  return t;
}

}  // namespace

TEST(Tokenize, HandExamples) {
  EXPECT_EQ(corpus::tokenize("Hello, world."), (TokenSeq{"hello", ",", "world", "."}));
  EXPECT_TRUE(corpus::tokenize("").empty());
  EXPECT_EQ(corpus::tokenize("I don't know!?"), (TokenSeq{"i", "don't", "know", "!", "?"}));
  EXPECT_EQ(corpus::tokenize("well-known  (test)"), (TokenSeq{"well-known", "(", "test", ")"}));
}

TEST(Tokenize, DetokenizeRoundTripProperty) {
  const std::vector<std::string> pool{"the", "cat", "i", "don't", "well-known", ",", ".", "?", "!", ";", "it's"};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    TokenSeq t = gen::random_tokens(rng, pool, 1, 15);
    EXPECT_EQ(corpus::tokenize(corpus::detokenize(t)), t) << corpus::detokenize(t);
  }
}

TEST(Vocabulary, ReservedIdsThenFrequencyThenLexicographic) {
  const std::vector<TokenSeq> corpus{{"b", "a", "c"}, {"c", "b"}, {"c"}};
  const auto v = corpus::Vocabulary::build(corpus);
  EXPECT_EQ(v.token(corpus::Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.id("c"), 4);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.id("a"), 6);
  EXPECT_EQ(v.id("never"), corpus::Vocabulary::kUnk);
  EXPECT_EQ(corpus::Vocabulary::deserialize(v.serialize()), v);
  EXPECT_EQ(v.decode(v.encode(TokenSeq{"a", "zz", "c"})), (TokenSeq{"a", "<unk>", "c"}));
  EXPECT_EQ(corpus::Vocabulary::build(corpus, 2).size(), 6U);
}

TEST(MachineStyle, DeterministicAndKeepsLineage) {
  const auto humans = corpus::synthesize_human_corpus(50, 3, table());
  for (const auto& h : humans) {
    const auto a = corpus::machine_style(h, 9, table());
    const auto b = corpus::machine_style(h, 9, table());
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.id, h.id + "#ai");
    EXPECT_EQ(a.label, Label::AI);
    EXPECT_EQ(a.tokens, corpus::tokenize(a.text));
  }
}

TEST(MachineStyle, ContentOverlapFloorHoldsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& h : corpus::synthesize_human_corpus(30, seed, table())) {
      const auto a = corpus::machine_style(h, seed, table());
      EXPECT_GE(corpus::content_overlap(h.tokens, a.tokens), 0.6) << h.text << " -> " << a.text;
    }
  }
}

TEST(MachineStyle, DegenerateConfigOnlyRegularizesPunctuation) {
  corpus::MachineStyleConfig cfg;
  cfg.p_connector = 0.0;
  cfg.p_synonym = 0.0;
  const auto h = Document::from_text("x", "We saw it!? Really...", Label::Human, "t");
  const auto a = corpus::machine_style(h, 1, table(), cfg);
  EXPECT_EQ(a.tokens, (TokenSeq{"we", "saw", "it", ".", "really", "."}));
}

TEST(MachineStyle, ExpandsContractions) {
  corpus::MachineStyleConfig cfg;
  cfg.p_connector = 0.0;
  cfg.p_synonym = 0.0;
  const auto h = Document::from_text("x", "I don't care.", Label::Human, "t");
  EXPECT_EQ(corpus::machine_style(h, 1, table(), cfg).tokens, (TokenSeq{"i", "do", "not", "care", "."}));
}

TEST(Synthesize, DeterministicPerSeed) {
  const auto a = corpus::synthesize_human_corpus(20, 5, table());
  const auto b = corpus::synthesize_human_corpus(20, 5, table());
  const auto c = corpus::synthesize_human_corpus(20, 6, table());
  ASSERT_EQ(a.size(), 20U);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].text, b[i].text);
    EXPECT_EQ(a[i].label, Label::Human);
  }
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    differing += a[i].text != c[i].text ? 1 : 0;
  }
  EXPECT_GT(differing, 0U);
}

// A detector fit on (human, machine_style(human)) separates held-out text.
TEST(Synthesize, StylesAreSeparable) {
  const auto humans = corpus::synthesize_human_corpus(1200, 21, table());
  std::vector<detectors::LabeledSeq> train;
  std::vector<detectors::LabeledSeq> test;
  for (std::size_t i = 0; i < humans.size(); ++i) {
    auto& dst = i < 1000 ? train : test;
    dst.push_back({humans[i].tokens, Label::Human});
    dst.push_back({corpus::machine_style(humans[i], 21, table()).tokens, Label::AI});
  }
  const auto det = detectors::fit_supervised(train, {});
  EXPECT_GE(detectors::accuracy(det, test), 0.9);
}

TEST(Jsonl, DocumentsAndPairsRoundTrip) {
  const auto humans = corpus::synthesize_human_corpus(5, 1, table());
  const auto p = temp_path("docs.jsonl");
  corpus::write_documents(p, humans);
  const auto back = corpus::read_documents(p);
  ASSERT_EQ(back.size(), humans.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, humans[i].id);
    EXPECT_EQ(back[i].text, humans[i].text);
    EXPECT_EQ(back[i].label, humans[i].label);
  }
  std::vector<corpus::ParallelPair> pairs;
  for (const auto& h : humans) {
    pairs.push_back({corpus::machine_style(h, 2, table()), h, 0.75, 0.125});
  }
  const auto pp = temp_path("pairs.jsonl");
  corpus::write_pairs(pp, pairs);
  const auto pb = corpus::read_pairs(pp);
  ASSERT_EQ(pb.size(), pairs.size());
  EXPECT_EQ(pb[0].x_ai.tokens, pairs[0].x_ai.tokens);
  EXPECT_DOUBLE_EQ(pb[0].d_ai, 0.75);
  EXPECT_DOUBLE_EQ(pb[0].d_human, 0.125);
}

TEST(BuildPairs, AllZeroOracleIsADistributionMismatch) {
  const auto humans = corpus::synthesize_human_corpus(50, 1, table());
  detectors::DetectorOracle oracle(gen::constant_detector(0.0));
  const corpus::Styler styler = [](const Document& d) { return corpus::machine_style(d, 1, table()); };
  EXPECT_THROW(corpus::build_pairs(humans, oracle, styler, 100), DistributionMismatch);
}

TEST(BuildPairs, SeparatingOracleAcceptsEverything) {
  const auto humans = corpus::synthesize_human_corpus(40, 1, table());
  detectors::DetectorOracle oracle(gen::marker_detector("#styled"));
  const corpus::Styler styler = [](const Document& d) {
    auto t = d.tokens;
    t.emplace_back("#styled");
    return Document::from_tokens(d.id + "#ai", t, Label::AI, "test");
  };
  corpus::PairBuildReport rep;
  const auto pairs = corpus::build_pairs(humans, oracle, styler, 1000, &rep);
  EXPECT_EQ(pairs.size(), 40U);
  EXPECT_DOUBLE_EQ(rep.acceptance_rate(), 1.0);
  EXPECT_EQ(rep.queries, 80U);
  EXPECT_EQ(oracle.query_count(), 80U);
  for (const auto& p : pairs) {
    EXPECT_TRUE(corpus::pair_satisfies_filter(p, oracle));
    EXPECT_EQ(p.x_ai.id, p.x_human.id + "#ai");
  }
  EXPECT_EQ(corpus::build_pairs(humans, oracle, styler, 7).size(), 7U);
}

TEST(BuildPairs, FilterDropsHumanSideFailures) {
  const auto humans = corpus::synthesize_human_corpus(20, 1, table());
  // every other human doc already looks machine-like
  std::size_t calls = 0;
  auto det = std::make_shared<gen::FnDetector>([&calls](const TokenSeq& x) {
    const bool styled = x.back() == "#styled";
    return styled ? 0.9 : ((calls++ % 2 == 0) ? 0.1 : 0.7);
  });
  detectors::DetectorOracle oracle(det);
  const corpus::Styler styler = [](const Document& d) {
    auto t = d.tokens;
    t.emplace_back("#styled");
    return Document::from_tokens(d.id + "#ai", t, Label::AI, "test");
  };
  corpus::PairBuildReport rep;
  const auto pairs = corpus::build_pairs(humans, oracle, styler, 1000, &rep);
  EXPECT_EQ(pairs.size(), 10U);
  for (const auto& p : pairs) {
    EXPECT_LT(p.d_human, 0.5);
    EXPECT_GT(p.d_ai, 0.5);
  }
}

TEST(BuildPairs, ByteIdenticalOutputForSameSeed) {
  const auto humans = corpus::synthesize_human_corpus(60, 4, table());
  detectors::DetectorOracle oracle(gen::marker_detector("moreover"));
  const corpus::Styler styler = [](const Document& d) { return corpus::machine_style(d, 4, table()); };
  const auto a = temp_path("pairs_a.jsonl");
  const auto b = temp_path("pairs_b.jsonl");
  corpus::write_pairs(a, corpus::build_pairs(humans, oracle, styler, 1000));
  corpus::write_pairs(b, corpus::build_pairs(humans, oracle, styler, 1000));
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_FALSE(slurp(a).empty());
}
