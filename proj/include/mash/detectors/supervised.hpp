#pragma once

#include <cstdint>
#include <vector>

#include "mash/detectors/oracle.hpp"

namespace mash::detectors {

/// Presence features over token unigrams and bigrams, hashed with a seeded
/// multiply-shift hash into 2^k buckets.
class HashedFeaturizer {
 public:
  explicit HashedFeaturizer(std::size_t dim = 4096, std::uint64_t seed = 0x5eed);

  /// Sorted, de-duplicated active bucket indices.
  [[nodiscard]] std::vector<std::uint32_t> features(const TokenSeq& x) const;
  [[nodiscard]] std::size_t dim() const { return dim_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  [[nodiscard]] std::uint32_t bucket(std::uint64_t h) const;

  std::size_t dim_;
  unsigned shift_;
  std::uint64_t seed_;
  std::uint64_t multiplier_;
};

struct LabeledSeq {
  TokenSeq tokens;
  Label label = Label::Unknown;  // Human or AI
};

struct SupervisedConfig {
  std::size_t dim = 4096;
  std::uint64_t seed = 0x5eed;
  double lr = 0.5;
  double l2 = 1e-4;
  std::size_t max_epochs = 500;
  double tolerance = 1e-6;  // stop when |loss delta| < tolerance
};

/// Logistic regression on hashed n-gram presence features.
class SupervisedDetector : public Detector {
 public:
  SupervisedDetector(HashedFeaturizer featurizer, std::vector<float> weights, float bias);

  [[nodiscard]] double evaluate(const TokenSeq& x) const override;
  [[nodiscard]] std::string backend() const override { return "supervised"; }
  [[nodiscard]] nn::Checkpoint to_checkpoint() const override;
  static SupervisedDetector from_checkpoint(const nn::Checkpoint& ckpt);

  [[nodiscard]] const HashedFeaturizer& featurizer() const { return featurizer_; }
  [[nodiscard]] const std::vector<float>& weights() const { return weights_; }
  [[nodiscard]] float bias() const { return bias_; }

 private:
  HashedFeaturizer featurizer_;
  std::vector<float> weights_;
  float bias_;
};

struct FitReport {
  std::size_t epochs = 0;
  double final_loss = 0.0;
  bool converged = false;
};

/// Full-batch gradient descent on mean log-loss (+ l2). Throws ConfigError
/// unless both Human and AI examples are present.
SupervisedDetector fit_supervised(const std::vector<LabeledSeq>& train, const SupervisedConfig& cfg,
                                  FitReport* report = nullptr);

/// Continues training from an existing detector (same featurizer).
SupervisedDetector fine_tune_supervised(const SupervisedDetector& start, const std::vector<LabeledSeq>& train,
                                        const SupervisedConfig& cfg, FitReport* report = nullptr);

/// Fraction of examples whose decide() label matches, at the given threshold.
double accuracy(const Detector& detector, const std::vector<LabeledSeq>& data, double threshold = 0.5);

}  // namespace mash::detectors
