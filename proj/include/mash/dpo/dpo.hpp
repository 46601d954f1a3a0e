#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mash/corpus/document.hpp"
#include "mash/detectors/oracle.hpp"
#include "mash/styler/model.hpp"

namespace mash::dpo {

struct PreferenceTriple {
  std::string id;
  TokenSeq x;    // source machine text
  TokenSeq y_w;  // chosen: the paired human text
  TokenSeq y_l;  // rejected: a styler sample
  double d_l = 0.0;
};

// JSONL {"id", "x", "y_w", "y_l", "d_l"}, texts detokenized.
void write_triples(const std::filesystem::path& path, const std::vector<PreferenceTriple>& triples);
std::vector<PreferenceTriple> read_triples(const std::filesystem::path& path);

enum class NegativeMode {
  hard,       // keep the first sample the oracle labels AI
  ambiguous,  // keep the first sample the oracle labels Human
};
std::string_view to_string(NegativeMode m);
NegativeMode negative_mode_from_string(std::string_view text);

struct MiningConfig {
  std::size_t samples_per_input = 8;
  double temperature = 1.0;
  NegativeMode mode = NegativeMode::hard;
  std::uint64_t seed = 0;
};

struct MiningReport {
  std::size_t inputs = 0;
  std::size_t retained = 0;
  std::uint64_t queries = 0;
  [[nodiscard]] double retention_rate() const {
    return inputs == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(inputs);
  }
};

/// Samples up to samples_per_input Human-style outputs per pair (per-pair
/// derived seeds) and keeps the first one matching the mode. Throws
/// EmptyPreferenceSet when nothing is retained.
std::vector<PreferenceTriple> mine_preferences(std::span<const corpus::ParallelPair> pairs,
                                               const styler::StylerModel& sft_model,
                                               const detectors::DetectorOracle& oracle, const MiningConfig& cfg,
                                               MiningReport* report = nullptr);

/// h(y_w) and h(y_l) with h(y) = beta * (log pi(y|x) - log pi_ref(y|x)), Human style.
struct ImplicitRewards {
  double h_w = 0.0;
  double h_l = 0.0;
};
ImplicitRewards implicit_rewards(const styler::StylerModel& policy, const styler::StylerModel& reference,
                                 const PreferenceTriple& t, double beta);

/// -log sigmoid(h_w - h_l). Throws NumericError on a non-finite log-prob.
double dpo_loss(const styler::StylerModel& policy, const styler::StylerModel& reference, const PreferenceTriple& t,
                double beta);
/// sigmoid(h_l - h_w), the per-triple gradient scale.
double dpo_weighting(const styler::StylerModel& policy, const styler::StylerModel& reference,
                     const PreferenceTriple& t, double beta);
double dpo_loss_from_rewards(const ImplicitRewards& r);
double dpo_weighting_from_rewards(const ImplicitRewards& r);

struct EncodedTriple {
  Ids x;
  Ids y_w;
  Ids y_l;
  double ref_w = 0.0;  // log pi_ref(y_w | x)
  double ref_l = 0.0;
};

EncodedTriple encode_triple(const styler::StylerModel& reference, const PreferenceTriple& t);

/// Mean DPO loss over a batch as a graph node; weightings (one per triple)
/// are written when non-null. Triples with y_w == y_l contribute the constant
/// ln 2 and no gradient.
template <typename T>
nn::NodeId build_dpo_loss(nn::Graph<T>& g, styler::StylerParams<T>& policy, const styler::ModelDims& dims,
                          std::span<const EncodedTriple> batch, double beta, std::vector<double>* weightings = nullptr);

struct DpoConfig {
  double beta = 0.1;
  double lr = 5e-5;
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct DpoEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double mean_weighting = 0.0;
  double mean_grad_norm = 0.0;
};

struct DpoReport {
  std::vector<DpoEpoch> history;
  bool reference_unchanged = false;
};

/// Policy starts as a copy of `sft_model`, which also serves as the frozen
/// reference. Throws ContractViolation on an empty triple set, ConfigError on
/// beta <= 0, NumericError on a non-finite loss.
styler::StylerModel train_dpo(const styler::StylerModel& sft_model, std::span<const PreferenceTriple> triples,
                              const DpoConfig& cfg, DpoReport* report = nullptr);

}  // namespace mash::dpo
