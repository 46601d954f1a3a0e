#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "generators.hpp"
#include "mash/corpus/document.hpp"
#include "mash/corpus/text.hpp"
#include "mash/eval/defense.hpp"
#include "mash/eval/metrics.hpp"

using namespace mash;

namespace {

// Fraction of (machine, human) pairs ordered correctly, ties counted half.
double pair_count_auc(const std::vector<double>& human, const std::vector<double>& machine) {
  double good = 0.0;
  for (double m : machine) {
    for (double h : human) {
      good += m > h ? 1.0 : (m == h ? 0.5 : 0.0);
    }
  }
  return good / static_cast<double>(human.size() * machine.size());
}

lm::TextLM small_lm() {
  std::vector<TokenSeq> corpus(20, corpus::tokenize("the cat sat on the mat ."));
  return lm::TextLM::fit(corpus, 2, 0.1);
}

struct DefenseData {
  std::vector<TokenSeq> human;
  std::vector<TokenSeq> machine;
  std::vector<detectors::LabeledSeq> train;
  std::vector<detectors::LabeledSeq> test;
};

DefenseData defense_data(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  const std::vector<std::string> hp{"i", "think", "kinda", "we", "went", "the", "a", "fun", "lol", "so"};
  const std::vector<std::string> mp{"moreover", "the", "a", "utilize", "furthermore", "significant", "overall",
                                    "notably", "so", "we"};
  DefenseData d;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    auto h = gen::random_tokens(rng, hp, 4, 10);
    auto m = gen::random_tokens(rng, mp, 4, 10);
    auto& dst = i < n ? d.train : d.test;
    dst.push_back({h, Label::Human});
    dst.push_back({m, Label::AI});
    if (i < n) {
      d.human.push_back(h);
      d.machine.push_back(m);
    }
  }
  return d;
}

}  // namespace

TEST(Asr, HandValues) {
  EXPECT_DOUBLE_EQ(eval::asr(std::vector<double>(5, 0.1)), 1.0);
  EXPECT_DOUBLE_EQ(eval::asr(std::vector<double>(5, 0.9)), 0.0);
  EXPECT_DOUBLE_EQ(eval::asr(std::vector<double>{0.1, 0.2, 0.6, 0.9}, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(eval::asr(std::vector<double>{0.5}, 0.5), 0.0);
  EXPECT_THROW(static_cast<void>(eval::asr(std::vector<double>{})), ContractViolation);
}

TEST(Asr, ComplementsFractionAtOrAboveTau) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto s = gen::random_scores(rng, 1 + rng.below(40), seed % 2 == 0);
    const double tau = rng.below(3) == 0 ? s[rng.below(s.size())] : rng.uniform();
    std::size_t above = 0;
    for (double v : s) {
      above += v >= tau ? 1 : 0;
    }
    EXPECT_EQ(eval::asr(s, tau) + static_cast<double>(above) / static_cast<double>(s.size()), 1.0);
  }
}

TEST(Similarity, HandValues) {
  EXPECT_DOUBLE_EQ(eval::similarity({"a", "b"}, {"a", "b"}), 1.0);
  EXPECT_DOUBLE_EQ(eval::similarity({"a", "b"}, {"c", "d"}), 0.0);
  EXPECT_NEAR(eval::similarity({"x", "y", "z"}, {"x", "y", "q"}), 2.0 / 3.0, 1e-15);
  // multiset: one shared "a" out of 3 and 1 tokens
  EXPECT_NEAR(eval::similarity({"a", "a", "b"}, {"a"}), 2.0 * (1.0 / 3.0) * 1.0 / (1.0 / 3.0 + 1.0), 1e-15);
  EXPECT_THROW(static_cast<void>(eval::similarity({}, {"a"})), ContractViolation);
}

TEST(Roc, HandValues) {
  const auto sep = eval::roc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9});
  EXPECT_DOUBLE_EQ(sep.auroc, 1.0);
  EXPECT_DOUBLE_EQ(sep.tpr_at_1pct_fpr, 1.0);
  EXPECT_DOUBLE_EQ(sep.points.front().fpr, 0.0);
  EXPECT_DOUBLE_EQ(sep.points.front().tpr, 0.0);
  EXPECT_DOUBLE_EQ(sep.points.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(sep.points.back().tpr, 1.0);

  const auto flat = eval::roc(std::vector<double>(4, 0.5), std::vector<double>(3, 0.5));
  EXPECT_DOUBLE_EQ(flat.auroc, 0.5);
  EXPECT_DOUBLE_EQ(flat.tpr_at_1pct_fpr, 0.0);
  EXPECT_EQ(flat.points.size(), 2U);

  // six points; 6 of 9 pairs ordered, one tie
  const std::vector<double> h{0.1, 0.4, 0.7};
  const std::vector<double> m{0.4, 0.8, 0.35};
  EXPECT_NEAR(eval::roc(h, m).auroc, pair_count_auc(h, m), 1e-15);
  EXPECT_NEAR(eval::roc(h, m).auroc, 5.5 / 9.0, 1e-15);
  EXPECT_THROW(static_cast<void>(eval::roc(std::vector<double>{}, m)), ContractViolation);
}

TEST(Roc, TrapezoidAgreesWithMannWhitneyAndPairCount) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const bool ties = seed % 2 == 1;
    const auto h = gen::random_scores(rng, 1 + rng.below(50), ties);
    const auto m = gen::random_scores(rng, 1 + rng.below(50), ties);
    const auto r = eval::roc(h, m);
    EXPECT_NEAR(r.auroc, r.auroc_mann_whitney, 1e-9);
    EXPECT_NEAR(r.auroc, eval::mann_whitney_auc(h, m), 1e-9);
    EXPECT_NEAR(r.auroc, pair_count_auc(h, m), 1e-9);
    for (std::size_t i = 1; i < r.points.size(); ++i) {
      EXPECT_GE(r.points[i].fpr, r.points[i - 1].fpr);
      EXPECT_GE(r.points[i].tpr, r.points[i - 1].tpr);
    }
  }
}

TEST(Roc, TprAtFprIsConservative) {
  const std::vector<eval::RocPoint> pts{{INFINITY, 0.0, 0.0}, {0.9, 0.0, 0.4}, {0.8, 0.02, 0.9}, {0.1, 1.0, 1.0}};
  EXPECT_DOUBLE_EQ(eval::tpr_at_fpr(pts, 0.01), 0.4);
  EXPECT_DOUBLE_EQ(eval::tpr_at_fpr(pts, 0.02), 0.9);
  // 200 humans: one false positive (0.5%) is allowed, three (1.5%) are not
  std::vector<double> h(200, 0.1);
  h[0] = 0.95;
  h[1] = h[2] = 0.93;
  const std::vector<double> m{0.9, 0.99, 0.2};
  EXPECT_NEAR(eval::roc(h, m).tpr_at_1pct_fpr, 1.0 / 3.0, 1e-15);
}

TEST(AmortizedCost, Values) {
  EXPECT_DOUBLE_EQ(eval::amortized_cost(1000, 0, 1000), 1.0);
  EXPECT_LT(eval::amortized_cost(1000, 0, 100000000), 1e-4);
  for (std::int64_t n : {1, 7, 1000}) {
    EXPECT_DOUBLE_EQ(eval::amortized_cost(0, 3.5, n), 3.5);
  }
  EXPECT_THROW(static_cast<void>(eval::amortized_cost(1, 1, 0)), ContractViolation);
}

TEST(Constraints, Boundaries) {
  const auto lm = small_lm();
  const auto x = corpus::tokenize("the cat sat on the mat .");
  eval::ConstraintConfig cfg{0.5, 1e6};
  EXPECT_TRUE(eval::check_constraints(x, x, cfg, lm).pass);

  cfg.epsilon = 1.0;
  auto changed = x;
  changed[1] = "dog";
  const auto r = eval::check_constraints(changed, x, cfg, lm);
  EXPECT_FALSE(r.pass);
  ASSERT_EQ(r.reasons.size(), 1U);
  EXPECT_NE(r.reasons[0].find("similarity"), std::string::npos);

  // similarity exactly 2/3 at epsilon 2/3 is inclusive
  cfg.epsilon = eval::similarity({"x", "y", "z"}, {"x", "y", "q"});
  EXPECT_TRUE(eval::check_constraints({"x", "y", "z"}, {"x", "y", "q"}, cfg, lm).pass);

  cfg = {0.0, 1.0};
  const auto p = eval::check_constraints(x, x, cfg, lm);
  EXPECT_FALSE(p.pass);
  EXPECT_GT(p.ppl, 1.0);
  cfg.delta = p.ppl;
  EXPECT_TRUE(eval::check_constraints(x, x, cfg, lm).pass);

  EXPECT_FALSE(eval::check_constraints({}, x, {}, lm).pass);
  EXPECT_THROW((eval::ConstraintConfig{1.5, 10.0}.validate()), ConfigError);
  EXPECT_THROW((eval::ConstraintConfig{0.5, 0.5}.validate()), ConfigError);
}

TEST(Summary, CountsViolationsAndSerializes) {
  const auto lm = small_lm();
  const auto src = corpus::tokenize("the cat sat on the mat .");
  std::vector<eval::AttackSample> s{{"a", src, src, 0.1},
                                    {"b", src, corpus::tokenize("zebra quantum"), 0.2},
                                    {"c", src, src, 0.9},
                                    {"d", src, {}, 0.3}};
  const auto r = eval::summarize_attack("run", s, 0.5, {0.5, 1e6}, lm, 12);
  EXPECT_EQ(r.n, 4U);
  EXPECT_DOUBLE_EQ(r.asr, 0.75);
  EXPECT_DOUBLE_EQ(r.constrained_asr, 0.25);
  EXPECT_EQ(r.similarity_violations, 2U);
  EXPECT_DOUBLE_EQ(r.queries_per_sample, 3.0);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["run"], "run");
  EXPECT_DOUBLE_EQ(j["asr"].get<double>(), 0.75);
  EXPECT_FALSE(j.contains("auroc"));
  const auto header = eval::MetricsReport::csv_header();
  const auto row = r.csv_row();
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_EQ(row.rfind("run,4,", 0), 0U);

  const auto roc = eval::roc(std::vector<double>{0.1, 0.3}, std::vector<double>{0.2, 0.9});
  const auto path = std::filesystem::temp_directory_path() / "mash_unit_roc.csv";
  eval::write_roc_csv(path, roc);
  const auto lines = corpus::read_lines(path);
  EXPECT_EQ(lines.front(), "threshold,fpr,tpr");
  EXPECT_EQ(lines.size(), roc.points.size() + 1);
  EXPECT_EQ(lines[1].rfind("inf,0,0", 0), 0U);
}

TEST(Defense, RejectsLopsidedMixtures) {
  const auto d = defense_data(1, 20);
  const auto det = detectors::fit_supervised(d.train, {});
  const std::vector<TokenSeq> mash(2, TokenSeq{"i", "think"});
  EXPECT_THROW(eval::adversarial_defense(det, d.human, {}, mash, d.test, mash, {}), ConfigError);
  EXPECT_THROW(eval::adversarial_defense(det, {}, d.machine, mash, d.test, mash, {}), ConfigError);
}

TEST(Defense, NoMashSamplesLeavesConvergedDetectorInPlace) {
  const auto d = defense_data(2, 40);
  detectors::SupervisedConfig cfg;
  cfg.dim = 256;
  cfg.l2 = 1e-2;
  cfg.max_epochs = 20000;
  cfg.tolerance = 1e-10;
  detectors::FitReport rep;
  const auto det = detectors::fit_supervised(d.train, cfg, &rep);
  ASSERT_TRUE(rep.converged) << rep.epochs << " " << rep.final_loss;
  eval::DefenseConfig dc;
  dc.fine_tune = cfg;
  const std::vector<TokenSeq> probe{d.human.front()};
  const auto r = eval::adversarial_defense(det, d.human, d.machine, {}, d.test, probe, dc);
  double worst = 0.0;
  for (std::size_t i = 0; i < det.weights().size(); ++i) {
    worst = std::max(worst, static_cast<double>(std::abs(det.weights()[i] - r.detector.weights()[i])));
  }
  EXPECT_LT(worst, 1e-3);
  EXPECT_NEAR(r.detector.bias(), det.bias(), 1e-3);
  EXPECT_DOUBLE_EQ(r.before.clean_accuracy, r.after.clean_accuracy);
}

TEST(Defense, MashSamplesCloseTheGapWithoutTouchingTheInput) {
  const auto d = defense_data(3, 60);
  detectors::SupervisedConfig cfg;
  cfg.dim = 512;
  const auto det = detectors::fit_supervised(d.train, cfg);
  const auto weights = det.weights();
  Rng rng(9);
  const std::vector<std::string> evasive{"qq", "i", "we", "fun", "so"};
  std::vector<TokenSeq> mash_train;
  std::vector<TokenSeq> mash_test;
  for (int i = 0; i < 60; ++i) {
    (i % 2 == 0 ? mash_train : mash_test).push_back(TokenSeq{"qq", "qq"});
  }
  for (auto& x : mash_train) {
    auto extra = gen::random_tokens(rng, evasive, 2, 5);
    x.insert(x.end(), extra.begin(), extra.end());
  }
  for (auto& x : mash_test) {
    auto extra = gen::random_tokens(rng, evasive, 2, 5);
    x.insert(x.end(), extra.begin(), extra.end());
  }
  const std::vector<TokenSeq> human(d.human.begin(), d.human.begin() + 50);
  const std::vector<TokenSeq> machine(d.machine.begin(), d.machine.begin() + 20);
  eval::DefenseConfig dc;
  dc.fine_tune = cfg;
  const auto r = eval::adversarial_defense(det, human, machine, mash_train, d.test, mash_test, dc);
  EXPECT_GT(r.before.asr, 0.5);
  EXPECT_LT(r.after.asr, 0.2);
  EXPECT_GT(r.after.clean_accuracy, 0.8);
  EXPECT_EQ(r.human_samples, 50U);
  EXPECT_EQ(r.ai_samples, 50U);
  EXPECT_EQ(det.weights(), weights);
  const auto j = nlohmann::json::parse(eval::defense_json(r));
  EXPECT_TRUE(j.contains("before"));
  EXPECT_TRUE(j.contains("after"));
}
