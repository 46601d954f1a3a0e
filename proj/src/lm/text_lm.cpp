#include "mash/lm/text_lm.hpp"

namespace mash::lm {

TextLM::TextLM(corpus::Vocabulary vocab, NgramLM model) : vocab_(std::move(vocab)), model_(std::move(model)) {
  if (vocab_.size() != model_.vocab_size()) {
    throw ConfigError("text lm: vocabulary and model sizes differ");
  }
}

TextLM TextLM::fit(std::span<const TokenSeq> corpus, int order, double alpha) {
  auto vocab = corpus::Vocabulary::build(corpus);
  std::vector<Ids> ids;
  ids.reserve(corpus.size());
  for (const auto& x : corpus) {
    ids.push_back(vocab.encode(x));
  }
  auto model = NgramLM::fit(ids, vocab.size(), order, alpha);
  return {std::move(vocab), std::move(model)};
}

double TextLM::perplexity(const TokenSeq& x) const { return lm::perplexity(model_, vocab_.encode(x)); }

nn::Checkpoint TextLM::to_checkpoint() const {
  auto ckpt = model_.to_checkpoint();
  ckpt.metadata["section"] = "lm.text";
  ckpt.metadata["vocab"] = vocab_.serialize();
  return ckpt;
}

TextLM TextLM::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.section() != "lm.text") {
    throw StructuralError("checkpoint section is '" + ckpt.section() + "', expected 'lm.text'");
  }
  auto inner = ckpt;
  inner.metadata["section"] = "ngram";
  return {corpus::Vocabulary::deserialize(ckpt.meta("vocab")), NgramLM::from_checkpoint(inner)};
}

}  // namespace mash::lm
