#include <cmath>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "mash/lm/ngram.hpp"
#include "mash/lm/text_lm.hpp"

using namespace mash;
using lm::NgramLM;

namespace {

// Bigram counts, hand-tallied: after <bos>: 0 x2, 1 x1; after 0: 1 x2; after 1: nothing.
NgramLM toy_bigram() {
  const std::vector<Ids> corpus{{0, 1}, {0, 1}, {1}};
  return NgramLM::fit(corpus, 2, 2, 0.5);
}

}  // namespace

TEST(Ngram, SmoothedProbabilitiesMatchHandCounts) {
  const auto m = toy_bigram();
  const Ids empty;
  const Ids after0{0};
  const Ids after1{1};
  EXPECT_DOUBLE_EQ(m.prob(empty, 0), 2.5 / 4.0);
  EXPECT_DOUBLE_EQ(m.prob(empty, 1), 1.5 / 4.0);
  EXPECT_DOUBLE_EQ(m.prob(after0, 1), 2.5 / 3.0);
  EXPECT_DOUBLE_EQ(m.prob(after0, 0), 0.5 / 3.0);
  EXPECT_DOUBLE_EQ(m.prob(after1, 0), 0.5);  // unseen context falls back to uniform
}

TEST(Ngram, PerplexityMatchesClosedForm) {
  const auto m = toy_bigram();
  const Ids x{0, 1};
  const double expected = std::exp(-(std::log(2.5 / 4.0) + std::log(2.5 / 3.0)) / 2.0);
  EXPECT_NEAR(lm::perplexity(m, x), expected, 1e-12);
  EXPECT_THROW(lm::perplexity(m, Ids{}), ContractViolation);
}

TEST(Ngram, UniformModelHasPerplexityV) {
  // order 1 fit on one of each symbol: every prob is 1/V
  const std::vector<Ids> corpus{{0, 1, 2, 3, 4}};
  const auto m = NgramLM::fit(corpus, 5, 1, 1.0);
  const Ids x{3, 3, 1, 0};
  EXPECT_NEAR(lm::perplexity(m, x), 5.0, 1e-12);
  EXPECT_NEAR(lm::cross_perplexity(m, m, x), 5.0, 1e-12);
}

TEST(Ngram, DistributionsSumToOne) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<Ids> corpus;
    for (int i = 0; i < 10; ++i) {
      Ids s;
      for (std::size_t t = 0; t < 1 + rng.below(8); ++t) {
        s.push_back(static_cast<std::int32_t>(rng.below(7)));
      }
      corpus.push_back(s);
    }
    const auto m = NgramLM::fit(corpus, 7, 1 + static_cast<int>(rng.below(4)), 0.01 + rng.uniform());
    std::vector<double> dist;
    m.distribution(corpus[0], dist);
    double total = 0.0;
    for (double p : dist) {
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Ngram, RejectsBadConfigurations) {
  const std::vector<Ids> corpus{{0, 1}};
  EXPECT_THROW(NgramLM::fit({}, 2, 2, 0.1), ConfigError);
  EXPECT_THROW(NgramLM::fit(corpus, 2, 0, 0.1), ConfigError);
  EXPECT_THROW(NgramLM::fit(corpus, 2, 5, 0.1), ConfigError);
  EXPECT_THROW(NgramLM::fit(corpus, 2, 2, 0.0), ConfigError);
  EXPECT_THROW(NgramLM::fit(corpus, 1, 2, 0.1), ConfigError);
  const auto m = NgramLM::fit(corpus, 2, 2, 0.1);
  NgramLM other = NgramLM::fit(std::vector<Ids>{{0}}, 3, 2, 0.1);
  EXPECT_THROW(lm::cross_perplexity(m, other, Ids{0}), ConfigError);
}

TEST(Ngram, CheckpointRoundTrip) {
  for (int order = 1; order <= 4; ++order) {
    const std::vector<Ids> corpus{{0, 1, 2, 1, 0}, {2, 2, 1}};
    const auto m = NgramLM::fit(corpus, 3, order, 0.2);
    EXPECT_EQ(NgramLM::from_checkpoint(m.to_checkpoint()), m);
  }
}

TEST(TextLM, UnseenTokensScoreAsUnknown) {
  const std::vector<TokenSeq> corpus{{"a", "b", "c"}, {"a", "b"}};
  const auto lm = lm::TextLM::fit(corpus, 2, 0.1);
  EXPECT_GT(lm.perplexity({"zzz", "qqq"}), lm.perplexity({"a", "b"}));
  const auto back = lm::TextLM::from_checkpoint(lm.to_checkpoint());
  EXPECT_DOUBLE_EQ(back.perplexity({"a", "b", "c"}), lm.perplexity({"a", "b", "c"}));
}
