#pragma once

#include "mash/corpus/text.hpp"
#include "mash/lm/ngram.hpp"

namespace mash::lm {

/// An n-gram model bundled with the vocabulary that maps tokens to its ids.
/// Out-of-vocabulary tokens score as unk.
class TextLM {
 public:
  TextLM(corpus::Vocabulary vocab, NgramLM model);
  static TextLM fit(std::span<const TokenSeq> corpus, int order = 3, double alpha = 0.1);

  /// Throws ContractViolation on empty x.
  [[nodiscard]] double perplexity(const TokenSeq& x) const;
  [[nodiscard]] const corpus::Vocabulary& vocab() const { return vocab_; }
  [[nodiscard]] const NgramLM& model() const { return model_; }

  [[nodiscard]] nn::Checkpoint to_checkpoint() const;
  static TextLM from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  corpus::Vocabulary vocab_;
  NgramLM model_;
};

}  // namespace mash::lm
