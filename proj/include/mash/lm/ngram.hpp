#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mash/common.hpp"
#include "mash/nn/checkpoint.hpp"

namespace mash::lm {

/// Fixed-order n-gram model with additive smoothing:
///   P(w | ctx) = (c(ctx, w) + alpha) / (c(ctx) + alpha * V)
/// Outcomes are ids in [0, V). Contexts shorter than order-1 are left-padded
/// with a begin marker (id V), which is never itself an outcome.
class NgramLM {
 public:
  /// Throws ConfigError on an empty corpus, order < 1 (or > 4), alpha <= 0,
  /// or ids outside [0, vocab_size).
  static NgramLM fit(std::span<const Ids> corpus, std::size_t vocab_size, int order = 3, double alpha = 0.1);

  [[nodiscard]] int order() const { return order_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] std::size_t vocab_size() const { return vocab_size_; }

  /// P(token | the last order-1 ids of history).
  [[nodiscard]] double prob(std::span<const std::int32_t> history, std::int32_t token) const;
  /// Full next-token distribution after history; out has vocab_size entries.
  void distribution(std::span<const std::int32_t> history, std::vector<double>& out) const;

  /// Per-position log P(x_t | x_<t), natural log.
  [[nodiscard]] std::vector<double> token_log_probs(std::span<const std::int32_t> x) const;

  [[nodiscard]] nn::Checkpoint to_checkpoint() const;
  static NgramLM from_checkpoint(const nn::Checkpoint& ckpt);

  bool operator==(const NgramLM& other) const;

 private:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<std::int32_t, std::uint32_t> next;
  };

  [[nodiscard]] std::uint64_t context_key(std::span<const std::int32_t> history) const;

  int order_ = 3;
  double alpha_ = 0.1;
  std::size_t vocab_size_ = 0;
  std::unordered_map<std::uint64_t, ContextCounts> counts_;
};

/// exp(-(1/T) sum_t log P(x_t | x_<t)). Throws ContractViolation on empty x.
double perplexity(const NgramLM& model, std::span<const std::int32_t> x);

/// exp of the mean over positions of the cross-entropy between the
/// performer's next-token distribution and the observer's log-probabilities.
/// Throws ConfigError when the vocabularies differ.
double cross_perplexity(const NgramLM& observer, const NgramLM& performer, std::span<const std::int32_t> x);

/// exp(-mean(log_probs)).
double perplexity_from_log_probs(std::span<const double> log_probs);

}  // namespace mash::lm
