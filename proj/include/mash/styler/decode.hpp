#pragma once

#include <cstdint>
#include <vector>

#include "mash/styler/model.hpp"

namespace mash::styler {

/// Fused encoder states for one (source, style), ready for step-wise decoding.
struct EncodedSource {
  nn::Matrix<float> fused;  // T x d
  nn::Matrix<float> keys;   // fused W_k
  std::size_t source_len = 0;
};

/// Step-wise inference on a frozen model. Uses the same kernels as the
/// training graph, so log-probabilities agree with StylerModel::nll.
class Decoder {
 public:
  explicit Decoder(const StylerModel& model) : model_(model) {}

  [[nodiscard]] EncodedSource encode(const Ids& source, Style style) const;
  /// log P(. | y_{t-1} = prev1, y_{t-2} = prev2, t, source) over the whole vocabulary.
  void log_probs(const EncodedSource& enc, std::int32_t prev1, std::int32_t prev2, std::size_t t,
                 std::vector<float>& out) const;

  /// Tokens a decoder may emit: everything except pad, unk and bos.
  [[nodiscard]] static bool emittable(std::int32_t id);

 private:
  const StylerModel& model_;
};

/// Length-normalized beam search (score / length, length counting the end
/// token). Output length is capped at twice the source length. Ties between
/// equal scores go to the lower hypothesis rank, then the lower token id.
TokenSeq generate(const StylerModel& model, const TokenSeq& source, Style style, std::size_t beam = 4);
/// Per-step argmax.
TokenSeq greedy(const StylerModel& model, const TokenSeq& source, Style style);
/// Ancestral sampling at the given temperature, same length cap as generate.
TokenSeq sample(const StylerModel& model, const TokenSeq& source, Style style, double temperature,
                std::uint64_t seed);

/// sum_t log P(y_t | ...) including the end token, via the step decoder.
double sequence_log_prob(const StylerModel& model, const TokenSeq& source, Style style, const TokenSeq& target);

}  // namespace mash::styler
