#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "generators.hpp"
#include "mash/dpo/dpo.hpp"
#include "mash/dpo/theory.hpp"
#include "mash/nn/gradcheck.hpp"
#include "mash/nn/optim.hpp"

using namespace mash;

namespace {

constexpr std::size_t kV = 20;
constexpr std::size_t kD = 8;

std::vector<corpus::ParallelPair> random_pairs(Rng& rng, std::size_t n) {
  const auto pool = gen::word_pool(kV - 4);
  std::vector<corpus::ParallelPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "p" + std::to_string(i);
    out.push_back({corpus::Document::from_tokens(id + "#ai", gen::random_tokens(rng, pool, 2, 6), Label::AI, "t"),
                   corpus::Document::from_tokens(id, gen::random_tokens(rng, pool, 2, 6), Label::Human, "t"), 0.9,
                   0.1});
  }
  return out;
}

dpo::EncodedTriple random_encoded(Rng& rng) {
  dpo::EncodedTriple e;
  auto draw = [&](std::size_t lo, std::size_t hi) {
    Ids ids;
    const std::size_t n = lo + rng.below(hi - lo + 1);
    for (std::size_t t = 0; t < n; ++t) {
      ids.push_back(static_cast<std::int32_t>(4 + rng.below(kV - 4)));
    }
    return ids;
  };
  e.x = draw(2, 6);
  e.y_w = draw(1, 6);
  do {
    e.y_l = draw(1, 6);
  } while (e.y_l == e.y_w);
  e.ref_w = -1.0 - 10.0 * rng.uniform();
  e.ref_l = -1.0 - 10.0 * rng.uniform();
  return e;
}

dpo::PreferenceTriple triple(TokenSeq x, TokenSeq w, TokenSeq l) { return {"t", std::move(x), std::move(w), std::move(l), 0.9}; }

double param_drift(const styler::StylerModel& a, const styler::StylerModel& b) { return a.squared_distance(b); }

}  // namespace

TEST(DpoLoss, PolicyEqualToReferenceGivesLn2AndHalfWeighting) {
  const auto m = gen::tiny_model(kV, kD, 1);
  const auto t = triple({"w1", "w2"}, {"w3", "w4"}, {"w5"});
  EXPECT_NEAR(dpo::dpo_loss(m, m, t, 0.1), std::log(2.0), 1e-12);
  EXPECT_NEAR(dpo::dpo_weighting(m, m, t, 0.1), 0.5, 1e-12);
  const auto r = dpo::implicit_rewards(m, m, t, 0.1);
  EXPECT_EQ(r.h_w, 0.0);
  EXPECT_EQ(r.h_l, 0.0);
}

TEST(DpoLoss, LimitsAndClosedFormWeighting) {
  EXPECT_NEAR(dpo::dpo_loss_from_rewards({50.0, 0.0}), 0.0, 1e-12);
  EXPECT_NEAR(dpo::dpo_weighting_from_rewards({50.0, 0.0}), 0.0, 1e-12);
  // policy prefers y_l by a gap of 5 in h units
  EXPECT_NEAR(dpo::dpo_weighting_from_rewards({0.0, 5.0}), 0.9933071490757153, 1e-12);
  EXPECT_NEAR(dpo::dpo_loss_from_rewards({0.0, 5.0}), 5.006715348489118, 1e-12);
  EXPECT_TRUE(std::isfinite(dpo::dpo_loss_from_rewards({-800.0, 800.0})));
}

TEST(DpoLoss, IdenticalResponsesGiveLn2AndZeroGradient) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const styler::ModelDims dims{kV, kD, 12};
    auto p = styler::init_params<double>(dims, seed);
    auto e = random_encoded(rng);
    e.y_l = e.y_w;
    nn::Graph<double> g;
    const std::vector<dpo::EncodedTriple> batch{e};
    const auto loss = dpo::build_dpo_loss(g, p, dims, std::span<const dpo::EncodedTriple>(batch), 0.1);
    EXPECT_NEAR(g.scalar(loss), std::log(2.0), 1e-12);
    auto params = p.all();
    nn::zero_grads<double>(params);
    g.backward(loss);
    for (auto* param : params) {
      for (double v : param->grad.data) {
        ASSERT_EQ(v, 0.0) << param->name;
      }
    }
  }
  const auto m = gen::tiny_model(kV, kD, 1);
  const auto other = gen::tiny_model(kV, kD, 2);
  EXPECT_NEAR(dpo::dpo_loss(other, m, triple({"w1"}, {"w2", "w3"}, {"w2", "w3"}), 0.1), std::log(2.0), 1e-9);
}

TEST(DpoLoss, GraphMatchesModelLevelLoss) {
  const auto ref = gen::tiny_model(kV, kD, 1);
  const auto pol = gen::tiny_model(kV, kD, 7);
  const auto t = triple({"w1", "w2", "w3"}, {"w4", "w5"}, {"w6", "w7", "w8"});
  const auto e = dpo::encode_triple(ref, t);
  auto params = pol.params();
  nn::Graph<float> g;
  std::vector<double> w;
  const std::vector<dpo::EncodedTriple> batch{e};
  const double loss = g.scalar(dpo::build_dpo_loss(g, params, pol.dims(), std::span<const dpo::EncodedTriple>(batch), 0.5, &w));
  EXPECT_NEAR(loss, dpo::dpo_loss(pol, ref, t, 0.5), 1e-4);
  ASSERT_EQ(w.size(), 1U);
  EXPECT_NEAR(w[0], dpo::dpo_weighting(pol, ref, t, 0.5), 1e-4);
}

// Finite differences (step 1e-3, extended precision) on every parameter of the d=8, V=20 model.
TEST(DpoLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    const styler::ModelDims dims{kV, kD, 12};
    auto p = styler::init_params<long double>(dims, seed);
    const std::vector<dpo::EncodedTriple> batch{random_encoded(rng), random_encoded(rng)};
    auto build = [&](nn::Graph<long double>& g) {
      return dpo::build_dpo_loss(g, p, dims, std::span<const dpo::EncodedTriple>(batch), 0.5);
    };
    for (auto* param : p.all()) {
      EXPECT_LT(nn::grad_check(build, *param, 1e-3), 1e-4) << param->name << " seed " << seed;
    }
  }
}

// On a single triple the gradient is w * grad(h_w - h_l), and only w depends
// on the reference log-probs, so the norm must rise with the weighting.
TEST(DpoLoss, GradientNormIsMonotoneInWeighting) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(300 + seed);
    const styler::ModelDims dims{kV, kD, 12};
    auto p = styler::init_params<double>(dims, seed);
    auto params = p.all();
    const auto base = random_encoded(rng);
    std::vector<std::pair<double, double>> points;
    for (int k = 0; k < 12; ++k) {
      auto e = base;
      e.ref_l = base.ref_w + 40.0 * (rng.uniform() - 0.5);
      nn::Graph<double> g;
      std::vector<double> w;
      const std::vector<dpo::EncodedTriple> batch{e};
      const auto loss = dpo::build_dpo_loss(g, p, dims, std::span<const dpo::EncodedTriple>(batch), 0.5, &w);
      nn::zero_grads<double>(params);
      g.backward(loss);
      double sq = 0.0;
      for (auto* param : params) {
        for (double v : param->grad.data) {
          sq += v * v;
        }
      }
      ASSERT_GT(w[0], 0.0);
      ASSERT_LT(w[0], 1.0);
      points.emplace_back(w[0], std::sqrt(sq));
    }
    std::sort(points.begin(), points.end());
    for (std::size_t i = 1; i < points.size(); ++i) {
      EXPECT_LE(points[i - 1].second, points[i].second * (1.0 + 1e-9));
    }
  }
}

TEST(Mining, ModesFollowTheOracleLabel) {
  Rng rng(1);
  const auto pairs = random_pairs(rng, 6);
  const auto m = gen::tiny_model(kV, kD, 3);
  dpo::MiningConfig cfg;
  cfg.samples_per_input = 3;
  cfg.seed = 5;

  detectors::DetectorOracle always_ai(gen::constant_detector(1.0));
  dpo::MiningReport rep;
  const auto hard = dpo::mine_preferences(pairs, m, always_ai, cfg, &rep);
  EXPECT_DOUBLE_EQ(rep.retention_rate(), 1.0);
  EXPECT_EQ(rep.queries, always_ai.query_count());
  EXPECT_LE(rep.queries, 6U * 3U);
  for (std::size_t i = 0; i < hard.size(); ++i) {
    EXPECT_GT(hard[i].d_l, 0.5);
    EXPECT_EQ(hard[i].y_w, pairs[i].x_human.tokens);
    EXPECT_EQ(hard[i].x, pairs[i].x_ai.tokens);
  }

  detectors::DetectorOracle never_ai(gen::constant_detector(0.0));
  EXPECT_THROW(dpo::mine_preferences(pairs, m, never_ai, cfg), EmptyPreferenceSet);
  cfg.mode = dpo::NegativeMode::ambiguous;
  const auto amb = dpo::mine_preferences(pairs, m, never_ai, cfg, &rep);
  EXPECT_DOUBLE_EQ(rep.retention_rate(), 1.0);
  for (const auto& t : amb) {
    EXPECT_LE(t.d_l, 0.5);
  }
  EXPECT_THROW(dpo::mine_preferences(pairs, m, always_ai, cfg), EmptyPreferenceSet);
}

TEST(Mining, DeterministicAndRoundTripsThroughJsonl) {
  Rng rng(2);
  const auto pairs = random_pairs(rng, 5);
  const auto m = gen::tiny_model(kV, kD, 3);
  detectors::DetectorOracle oracle(gen::constant_detector(0.8));
  dpo::MiningConfig cfg;
  cfg.seed = 9;
  const auto a = dpo::mine_preferences(pairs, m, oracle, cfg);
  const auto b = dpo::mine_preferences(pairs, m, oracle, cfg);
  ASSERT_EQ(a.size(), b.size());
  const auto path = std::filesystem::temp_directory_path() / "mash_unit_prefs.jsonl";
  dpo::write_triples(path, a);
  const auto back = dpo::read_triples(path);
  ASSERT_EQ(back.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].y_l, b[i].y_l);
    EXPECT_EQ(back[i].id, a[i].id);
    EXPECT_EQ(back[i].x, a[i].x);
    EXPECT_EQ(back[i].y_w, a[i].y_w);
    EXPECT_EQ(back[i].y_l, a[i].y_l);
    EXPECT_DOUBLE_EQ(back[i].d_l, a[i].d_l);
  }
  EXPECT_EQ(dpo::negative_mode_from_string("ambiguous"), dpo::NegativeMode::ambiguous);
  EXPECT_THROW(dpo::negative_mode_from_string("easy"), ConfigError);
}

TEST(TrainDpo, ReferenceStaysFrozenAndLargeBetaMovesLess) {
  Rng rng(3);
  const auto pairs = random_pairs(rng, 8);
  const auto sft = gen::tiny_model(kV, kD, 4);
  detectors::DetectorOracle oracle(gen::constant_detector(0.9));
  const auto triples = dpo::mine_preferences(pairs, sft, oracle, {});
  const auto before = sft;

  dpo::DpoConfig cfg;
  cfg.lr = 1e-3;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  dpo::DpoReport rep;
  const auto small_beta = dpo::train_dpo(sft, triples, cfg, &rep);
  EXPECT_TRUE(rep.reference_unchanged);
  EXPECT_TRUE(sft.same_weights(before));
  ASSERT_EQ(rep.history.size(), 1U);
  EXPECT_GT(rep.history[0].mean_weighting, 0.0);
  EXPECT_LT(rep.history[0].mean_weighting, 1.0);

  cfg.beta = 1e3;
  const auto large_beta = dpo::train_dpo(sft, triples, cfg);
  EXPECT_LT(param_drift(large_beta, sft), param_drift(small_beta, sft));

  cfg.beta = 0.0;
  EXPECT_THROW(dpo::train_dpo(sft, triples, cfg), ConfigError);
  EXPECT_THROW(dpo::train_dpo(sft, {}, {}), ContractViolation);
}

TEST(TrainDpo, LowersLossOnItsTriples) {
  Rng rng(4);
  const auto pairs = random_pairs(rng, 6);
  const auto sft = gen::tiny_model(kV, kD, 5);
  detectors::DetectorOracle oracle(gen::constant_detector(0.9));
  const auto triples = dpo::mine_preferences(pairs, sft, oracle, {});
  dpo::DpoConfig cfg;
  cfg.lr = 1e-2;
  cfg.epochs = 20;
  cfg.beta = 0.5;
  const auto policy = dpo::train_dpo(sft, triples, cfg);
  double mean = 0.0;
  for (const auto& t : triples) {
    mean += dpo::dpo_loss(policy, sft, t, cfg.beta);
  }
  EXPECT_LT(mean / static_cast<double>(triples.size()), std::log(2.0));
}

TEST(Theory, BradleyTerryValues) {
  EXPECT_DOUBLE_EQ(dpo::bradley_terry_prob(0.3, 0.3, 10.0), 0.5);
  EXPECT_GT(dpo::bradley_terry_prob(0.0, 1.0, 50.0), 1.0 - 1e-12);
  EXPECT_NEAR(dpo::bradley_terry_prob(0.0, 0.5, 1.0), 0.6224593312018546, 1e-12);
}

TEST(Theory, ClosedFormPolicyHandValues) {
  // uniform reference, r(a) = 0, r(b) = beta ln 3
  const double beta = 0.5;
  dpo::TheoryToy toy{{0.5, 0.5}, {1.0, 1.0 - beta * std::log(3.0)}, 1.0};
  const auto pi = dpo::closed_form_policy(toy, beta);
  EXPECT_NEAR(pi[1], 0.75, 1e-12);
  EXPECT_NEAR(pi[0], 0.25, 1e-12);
  EXPECT_NEAR(dpo::log_partition(toy, beta), std::log(0.5 + 0.5 * 3.0), 1e-12);

  dpo::TheoryToy flat{{0.2, 0.3, 0.5}, {0.4, 0.4, 0.4}, 10.0};
  const auto same = dpo::closed_form_policy(flat, 0.5);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(same[i], flat.pi_ref[i], 1e-12);
  }
}

TEST(Theory, ClosedFormRespectsSupportAndNormalizes) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(6);
    dpo::TheoryToy toy;
    toy.c = 20.0 * rng.uniform();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      toy.pi_ref.push_back(rng.below(3) == 0 ? 0.0 : rng.uniform());
      toy.d.push_back(rng.uniform());
      total += toy.pi_ref.back();
    }
    if (total == 0.0) {
      toy.pi_ref[0] = total = 1.0;
    }
    for (auto& v : toy.pi_ref) {
      v /= total;
    }
    const auto pi = dpo::closed_form_policy(toy, 0.05 + rng.uniform());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (toy.pi_ref[i] == 0.0) {
        EXPECT_EQ(pi[i], 0.0);
      }
      sum += pi[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Theory, ToyValidation) {
  EXPECT_THROW((dpo::TheoryToy{{0.5, 0.4}, {0.1, 0.2}, 1.0}.validate()), ConfigError);
  EXPECT_THROW((dpo::TheoryToy{{0.5, 0.5}, {0.1, 1.2}, 1.0}.validate()), ConfigError);
  EXPECT_THROW((dpo::TheoryToy{{0.5, 0.5}, {0.1}, 1.0}.validate()), ConfigError);
  EXPECT_NO_THROW((dpo::TheoryToy{{0.5, 0.5}, {0.1, 0.2}, 1.0}.validate()));
}

TEST(Theory, TabularDpoConvergesToClosedForm) {
  const dpo::TheoryToy toy{{0.3, 0.3, 0.4}, {0.0, 0.5, 0.9}, 10.0};
  const auto trained = dpo::tabular_dpo_convergence(toy, 0.5);
  EXPECT_LT(dpo::kl_divergence(trained, dpo::closed_form_policy(toy, 0.5)), 1e-2);
  // equal reference mass on outcomes 0 and 1; D = 0 wins
  EXPECT_GT(trained[0], trained[1]);
  EXPECT_EQ(std::max_element(trained.begin(), trained.end()) - trained.begin(), 0);
}

TEST(Theory, TabularDpoWithoutSignalStaysAtReference) {
  const dpo::TheoryToy toy{{0.2, 0.5, 0.3}, {0.0, 0.5, 1.0}, 0.0};
  EXPECT_LT(dpo::kl_divergence(dpo::tabular_dpo_convergence(toy, 0.5), toy.pi_ref), 1e-2);
}

TEST(Theory, TabularDpoKeepsZeroSupportAtZero) {
  const dpo::TheoryToy toy{{0.5, 0.0, 0.5}, {0.5, 0.0, 0.9}, 10.0};
  const auto trained = dpo::tabular_dpo_convergence(toy, 0.5);
  EXPECT_EQ(trained[1], 0.0);
  EXPECT_LT(dpo::kl_divergence(trained, dpo::closed_form_policy(toy, 0.5)), 1e-2);
}

TEST(Theory, KlDivergence) {
  EXPECT_DOUBLE_EQ(dpo::kl_divergence({0.5, 0.5}, {0.5, 0.5}), 0.0);
  EXPECT_NEAR(dpo::kl_divergence({1.0, 0.0}, {0.5, 0.5}), std::log(2.0), 1e-12);
}
