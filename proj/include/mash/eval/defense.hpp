#pragma once

#include <span>
#include <vector>

#include "mash/detectors/supervised.hpp"

namespace mash::eval {

struct DefenseConfig {
  detectors::SupervisedConfig fine_tune{};
  double tau = 0.5;
  double max_majority = 0.6;  // largest allowed class share in the mixture
};

struct DefenseSnapshot {
  double clean_accuracy = 0.0;
  double asr = 0.0;
};

struct DefenseResult {
  detectors::SupervisedDetector detector;
  DefenseSnapshot before;
  DefenseSnapshot after;
  std::size_t human_samples = 0;
  std::size_t ai_samples = 0;
};

/// Fine-tunes a copy of `detector` on human texts (label Human) against clean
/// machine texts and MASH outputs (label AI). Reports clean accuracy on
/// clean_test and ASR on mash_test before and after. The input detector is
/// never modified. Throws ConfigError when the mixture is more lopsided than
/// max_majority.
DefenseResult adversarial_defense(const detectors::SupervisedDetector& detector,
                                  std::span<const TokenSeq> clean_human, std::span<const TokenSeq> clean_machine,
                                  std::span<const TokenSeq> mash_outputs,
                                  std::span<const detectors::LabeledSeq> clean_test,
                                  std::span<const TokenSeq> mash_test, const DefenseConfig& cfg);

std::string defense_json(const DefenseResult& r);

}  // namespace mash::eval
