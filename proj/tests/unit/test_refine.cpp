#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "mash/corpus/text.hpp"
#include "mash/refine/refine.hpp"

using namespace mash;
using refine::RefineConfig;

namespace {

std::string mock(const std::string& args) { return std::string("exec:") + MOCK_NDJSON + " " + args; }

class FnPolisher : public refine::Polisher {
 public:
  explicit FnPolisher(std::function<std::vector<std::string>(const refine::PolishRequest&)> fn) : fn_(std::move(fn)) {}
  [[nodiscard]] std::vector<std::string> candidates(const refine::PolishRequest& req) const override {
    auto out = fn_(req);
    out.push_back(req.sentence);
    return out;
  }
  [[nodiscard]] std::string backend() const override { return "fn"; }

 private:
  std::function<std::vector<std::string>(const refine::PolishRequest&)> fn_;
};

const std::vector<std::string>& words() {
  static const std::vector<std::string> w{"the", "cat", "sat", "on", "mat", "a", "dog", "ran", "far", "home", "zzz"};
  return w;
}

std::string random_sentence(Rng& rng, bool allow_marker) {
  const std::size_t n = 2 + rng.below(6);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    std::string w = words()[rng.below(words().size() - (allow_marker ? 0 : 1))];
    s += (i == 0 ? "" : " ") + w;
  }
  return s + (rng.below(4) == 0 ? "!" : ".");
}

std::string random_document(Rng& rng, std::size_t sentences, bool allow_marker) {
  std::string d;
  for (std::size_t i = 0; i < sentences; ++i) {
    d += (i == 0 ? "" : (rng.below(3) == 0 ? "\n" : "  ")) + random_sentence(rng, allow_marker);
  }
  return d;
}

lm::TextLM eval_lm() {
  std::vector<TokenSeq> corpus;
  for (int i = 0; i < 40; ++i) {
    corpus.push_back(corpus::tokenize("the cat sat on the mat. a dog ran far home."));
  }
  corpus.push_back(corpus::tokenize("zzz"));
  return lm::TextLM::fit(corpus, 2, 0.1);
}

}  // namespace

TEST(Segment, HandExamples) {
  EXPECT_EQ(refine::split_sentences("A. B? C!"), (std::vector<std::string>{"A.", "B?", "C!"}));
  EXPECT_EQ(refine::split_sentences("e.g. apples."), (std::vector<std::string>{"e.g. apples."}));
  EXPECT_EQ(refine::split_sentences("Wait... what?!  Fine"), (std::vector<std::string>{"Wait...", "what?!", "Fine"}));
  EXPECT_EQ(refine::split_sentences("v1.2 is out. ok"), (std::vector<std::string>{"v1.2 is out.", "ok"}));
  EXPECT_TRUE(refine::split_sentences("").empty());
}

TEST(Segment, ReassembleRoundTripsRandomText) {
  const std::string alphabet = "ab .!?\n\te.g";
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    std::string text;
    for (std::size_t i = 0, n = rng.below(60); i < n; ++i) {
      text += alphabet[rng.below(alphabet.size())];
    }
    const auto seg = refine::segment(text);
    ASSERT_EQ(refine::reassemble(seg, seg.sentences()), text) << "seed " << seed;
    for (std::size_t i = 1; i < seg.spans.size(); ++i) {
      ASSERT_LE(seg.spans[i - 1].end, seg.spans[i].begin);
    }
  }
}

TEST(Segment, ReassembleKeepsSeparators) {
  const auto seg = refine::segment("One.\n\nTwo!  Three?");
  EXPECT_EQ(refine::reassemble(seg, {"1.", "2!", "3?"}), "1.\n\n2!  3?");
  EXPECT_THROW(static_cast<void>(refine::reassemble(seg, {"1."})), ContractViolation);
}

TEST(Refine, ProcessingOrderIsPplDescendingWithPositionTieBreak) {
  EXPECT_EQ(refine::processing_order({3.0, 9.0, 3.0, 9.0, 1.0}), (std::vector<std::size_t>{1, 3, 0, 2, 4}));
  EXPECT_TRUE(refine::processing_order({}).empty());
}

TEST(Refine, IdentityPolisherLeavesTextAndSpendsNoQueries) {
  detectors::DetectorOracle oracle(gen::marker_detector("zzz"));
  const std::string doc = "the cat sat.  a dog ran far.\nhome.";
  const auto r = refine::refine_document("d", doc, "ref", oracle, refine::IdentityPolisher(), eval_lm(), {});
  EXPECT_EQ(r.text, doc);
  EXPECT_EQ(r.replaced, 0U);
  EXPECT_EQ(r.queries, 0U);
  EXPECT_EQ(r.precondition_queries, 1U);
  EXPECT_EQ(oracle.query_count(), 1U);
  EXPECT_FALSE(r.skipped);
}

TEST(Refine, RejectsEveryCandidateThatFlipsTheLabel) {
  detectors::DetectorOracle oracle(gen::marker_detector("zzz"));
  FnPolisher flip([](const refine::PolishRequest& req) {
    return std::vector<std::string>(req.k, "the cat zzz.");
  });
  const std::string doc = "a dog far far far ran. home home cat.";
  RefineConfig cfg;
  cfg.k = 3;
  const auto r = refine::refine_document("d", doc, "ref", oracle, flip, eval_lm(), cfg);
  EXPECT_EQ(r.text, doc);
  EXPECT_EQ(r.replaced, 0U);
  EXPECT_LE(r.queries, 2U * 3U);
  EXPECT_EQ(oracle.query_count(), r.queries + 1);
}

TEST(Refine, SkipsInputsTheOracleAlreadyFlags) {
  detectors::DetectorOracle oracle(gen::marker_detector("zzz"));
  const std::string doc = "zzz the cat. a dog.";
  const auto r = refine::refine_document("d", doc, "ref", oracle, refine::IdentityPolisher(), eval_lm(), {});
  EXPECT_TRUE(r.skipped);
  EXPECT_EQ(r.text, doc);
  EXPECT_EQ(r.queries, 0U);
}

TEST(Refine, InvariantsHoldOnRandomDocuments) {
  const auto lm = eval_lm();
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rng rng(seed);
    detectors::DetectorOracle oracle(gen::marker_detector("zzz"));
    FnPolisher polisher([&rng](const refine::PolishRequest& req) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < req.k + 1; ++i) {
        out.push_back(random_sentence(rng, true));
      }
      return out;
    });
    const std::size_t n = 1 + rng.below(6);
    const auto doc = random_document(rng, n, false);
    RefineConfig cfg;
    cfg.k = 1 + rng.below(4);
    const auto r = refine::refine_document("d", doc, "ref", oracle, polisher, lm, cfg);
    ASSERT_FALSE(r.skipped);
    EXPECT_EQ(oracle.decide(corpus::tokenize(r.text)), Label::Human);
    EXPECT_LE(r.queries, n * cfg.k);
    EXPECT_EQ(oracle.query_count(), r.queries + 1 + 1);  // precondition plus the check above
    EXPECT_LE(r.ppl_after, r.ppl_before);
    EXPECT_NEAR(r.ppl_after, lm.perplexity(corpus::tokenize(r.text)), 1e-9 * r.ppl_after);
    EXPECT_EQ(r.plan.order, refine::processing_order(r.plan.ppl));
    const auto before = refine::split_sentences(doc);
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!r.plan.accepted[i]) {
        // untouched sentence text is byte-identical at its position
        EXPECT_NE(r.text.find(before[i]), std::string::npos);
      }
      accepted += r.plan.accepted[i] ? 1 : 0;
    }
    EXPECT_EQ(accepted, r.replaced);
  }
}

TEST(Refine, OracleFailureReturnsBestSoFarFlaggedPartial) {
  auto calls = std::make_shared<int>(0);
  auto flaky = std::make_shared<gen::FnDetector>([calls](const TokenSeq&) {
    if (++*calls > 2) {
      return 7.0;  // out of range, so the oracle reports it unavailable
    }
    return 0.1;
  });
  detectors::DetectorOracle oracle(flaky);
  FnPolisher polisher([](const refine::PolishRequest&) { return std::vector<std::string>{"the cat sat on the mat."}; });
  const std::string doc = "far far far dog. home far ran. dog dog far.";
  const auto r = refine::refine_document("d", doc, "ref", oracle, polisher, eval_lm(), {});
  EXPECT_TRUE(r.partial);
  EXPECT_EQ(r.replaced, 1U);
  EXPECT_NE(r.text, doc);
  EXPECT_EQ(refine::split_sentences(r.text).size(), 3U);
}

TEST(Refine, ExternalPolisherThroughNdjsonProcess) {
  const auto log = std::filesystem::temp_directory_path() / "mash_unit_polisher.log";
  std::filesystem::remove(log);
  refine::ExternalPolisher polisher(detectors::open_channel(mock("polisher --log " + log.string())));
  detectors::DetectorOracle oracle(gen::marker_detector("zzz"));
  const std::string doc = "Moreover, the cat sat on the mat. A dog ran far home.";
  const auto r = refine::refine_document("d", doc, "original", oracle, polisher, eval_lm(), {});
  EXPECT_EQ(r.replaced, 1U);
  EXPECT_EQ(r.text, "The cat sat on the mat. A dog ran far home.");
  std::ifstream in(log);
  std::string line;
  std::getline(in, line);
  EXPECT_NE(line.find("\"reference\":\"original\""), std::string::npos);
  EXPECT_NE(line.find("\"instruction\""), std::string::npos);

  refine::ExternalPolisher broken(detectors::open_channel(mock("polisher --mode garbage")));
  const auto p = refine::refine_document("d", doc, "original", oracle, broken, eval_lm(), {});
  EXPECT_TRUE(p.partial);
  EXPECT_EQ(p.text, doc);
}

TEST(Refine, ModelSamplerPolisherEndsWithFallback) {
  auto model = std::make_shared<styler::StylerModel>(gen::tiny_model(20, 8, 1));
  refine::ModelSamplerPolisher p(model, 0.7);
  const auto c = p.candidates({"w1 w2 w3", "ref", "", 3, 11});
  ASSERT_GE(c.size(), 1U);
  EXPECT_LE(c.size(), 4U);
  EXPECT_EQ(c.back(), "w1 w2 w3");
  EXPECT_EQ(c, p.candidates({"w1 w2 w3", "ref", "", 3, 11}));
  EXPECT_THROW(refine::ModelSamplerPolisher(model, 0.0), ConfigError);
}

TEST(Refine, ReportLine) {
  refine::RefineResult r;
  r.id = "x";
  r.replaced = 2;
  r.queries = 5;
  const auto line = refine::report_json_line(r);
  EXPECT_EQ(line.rfind("{\"id\":\"x\",\"n_sentences\":0,\"replaced\":2,\"queries\":5,", 0), 0U);
}
