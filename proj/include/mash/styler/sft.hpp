#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mash/corpus/document.hpp"
#include "mash/nn/optim.hpp"
#include "mash/styler/model.hpp"

namespace mash::styler {

struct SftConfig {
  double lambda = 0.5;  // weight of L_recon
  double lr = 2e-4;
  std::size_t epochs = 50;
  std::size_t patience = 5;
  std::size_t batch_size = 8;
  double val_fraction = 0.1;
  double clip_norm = 1.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct SftExample {
  TokenSeq x_ai;
  TokenSeq x_human;
};

std::vector<SftExample> sft_examples(std::span<const corpus::ParallelPair> pairs);

struct SftLoss {
  double recon = 0.0;  // mean over examples of nll(x_ai, AI, x_ai)
  double trans = 0.0;  // mean over examples of nll(x_ai, Human, x_human)
  double combined = 0.0;
};

struct EncodedExample {
  Ids source;  // x_ai
  Ids human;   // x_human
};

/// L_SFT over a batch: lambda * mean(L_recon) + (1 - lambda) * mean(L_trans).
/// recon/trans receive the two summed components when non-null.
template <typename T>
nn::NodeId build_sft_loss(nn::Graph<T>& g, StylerParams<T>& p, const ModelDims& dims,
                          std::span<const EncodedExample> batch, double lambda, nn::NodeId* recon = nullptr,
                          nn::NodeId* trans = nullptr);

SftLoss evaluate_sft(const StylerModel& model, std::span<const SftExample> examples, double lambda);

struct SftEpoch {
  std::size_t epoch = 0;
  SftLoss train;
  SftLoss val;
};

struct SftReport {
  SftLoss initial_val;
  std::vector<SftEpoch> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
  std::size_t composition_checks = 0;
};

/// AdamW with global-norm clipping, seeded shuffling, a held-out validation
/// split and early stopping; the best-validation weights are restored.
/// Throws ContractViolation on empty pairs, ConfigError on lambda outside
/// [0, 1], NumericError on a non-finite loss.
SftReport train_sft(StylerModel& model, std::span<const SftExample> examples, const SftConfig& cfg);

}  // namespace mash::styler
