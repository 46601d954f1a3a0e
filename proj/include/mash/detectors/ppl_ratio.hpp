#pragma once

#include <vector>

#include "mash/corpus/text.hpp"
#include "mash/detectors/oracle.hpp"
#include "mash/lm/ngram.hpp"

namespace mash::detectors {

/// Monotone map from a raw ratio to [0, 1]: min-max over the training raw
/// scores, clamped, flipped when lower raw values are the AI-like ones.
struct RatioCalibration {
  double lo = 0.0;
  double hi = 1.0;
  bool ai_is_high = true;

  [[nodiscard]] double apply(double raw) const;
};

/// Zero-shot detector scoring observer perplexity divided by observer/performer
/// cross-perplexity, with n-gram models standing in for the two LLMs.
class PplRatioDetector : public Detector {
 public:
  PplRatioDetector(corpus::Vocabulary vocab, lm::NgramLM observer, lm::NgramLM performer, RatioCalibration cal);

  [[nodiscard]] double raw_score(const TokenSeq& x) const;
  [[nodiscard]] double evaluate(const TokenSeq& x) const override;
  [[nodiscard]] std::string backend() const override { return "ppl-ratio"; }
  [[nodiscard]] nn::Checkpoint to_checkpoint() const override;
  static PplRatioDetector from_checkpoint(const nn::Checkpoint& ckpt);

  [[nodiscard]] const RatioCalibration& calibration() const { return cal_; }
  [[nodiscard]] const lm::NgramLM& observer() const { return observer_; }
  [[nodiscard]] const lm::NgramLM& performer() const { return performer_; }

 private:
  corpus::Vocabulary vocab_;
  lm::NgramLM observer_;
  lm::NgramLM performer_;
  RatioCalibration cal_;
};

struct PplRatioConfig {
  int order = 3;
  // Sharper than the lm default: with ~500 types, alpha = 0.1 puts most of a
  // sparse trigram context's mass on smoothing and washes out the ratio.
  double alpha = 0.03;
};

/// Observer fit on human + machine text, performer on machine text only.
/// Throws ConfigError on an empty corpus or when the raw scores are constant.
PplRatioDetector fit_ppl_ratio(const std::vector<TokenSeq>& human_corpus, const std::vector<TokenSeq>& machine_corpus,
                               const corpus::Vocabulary& vocab, const PplRatioConfig& cfg = {});

}  // namespace mash::detectors
