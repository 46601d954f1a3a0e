#include "mash/detectors/ppl_ratio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mash::detectors {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nn::Checkpoint prefixed(const nn::Checkpoint& src, const std::string& prefix) {
  nn::Checkpoint out;
  for (auto t : src.tensors) {
    t.name = prefix + t.name;
    out.tensors.push_back(std::move(t));
  }
  for (const auto& [k, v] : src.metadata) {
    out.metadata[prefix + k] = v;
  }
  return out;
}

nn::Checkpoint unprefixed(const nn::Checkpoint& src, const std::string& prefix) {
  nn::Checkpoint out;
  for (const auto& t : src.tensors) {
    if (t.name.starts_with(prefix)) {
      auto copy = t;
      copy.name = t.name.substr(prefix.size());
      out.tensors.push_back(std::move(copy));
    }
  }
  for (const auto& [k, v] : src.metadata) {
    if (k.starts_with(prefix)) {
      out.metadata[k.substr(prefix.size())] = v;
    }
  }
  return out;
}

}  // namespace

double RatioCalibration::apply(double raw) const {
  const double t = (raw - lo) / (hi - lo);
  return std::clamp(ai_is_high ? t : 1.0 - t, 0.0, 1.0);
}

PplRatioDetector::PplRatioDetector(corpus::Vocabulary vocab, lm::NgramLM observer, lm::NgramLM performer,
                                   RatioCalibration cal)
    : vocab_(std::move(vocab)), observer_(std::move(observer)), performer_(std::move(performer)), cal_(cal) {
  if (observer_.vocab_size() != performer_.vocab_size() || observer_.vocab_size() != vocab_.size()) {
    throw ConfigError("ppl-ratio detector: observer, performer and vocabulary sizes differ");
  }
  if (!(cal_.hi > cal_.lo)) {
    throw ConfigError("ppl-ratio detector: degenerate calibration range");
  }
}

double PplRatioDetector::raw_score(const TokenSeq& x) const {
  const auto ids = vocab_.encode(x);
  return lm::perplexity(observer_, ids) / lm::cross_perplexity(observer_, performer_, ids);
}

double PplRatioDetector::evaluate(const TokenSeq& x) const { return cal_.apply(raw_score(x)); }

nn::Checkpoint PplRatioDetector::to_checkpoint() const {
  nn::Checkpoint ckpt;
  for (auto* part : {&observer_, &performer_}) {
    auto sub = prefixed(part->to_checkpoint(), part == &observer_ ? "observer." : "performer.");
    for (auto& t : sub.tensors) {
      ckpt.tensors.push_back(std::move(t));
    }
    ckpt.metadata.merge(sub.metadata);
  }
  ckpt.metadata["section"] = "detector.ppl-ratio";
  ckpt.metadata["vocab"] = vocab_.serialize();
  ckpt.metadata["cal.lo"] = format_double(cal_.lo);
  ckpt.metadata["cal.hi"] = format_double(cal_.hi);
  ckpt.metadata["cal.ai_is_high"] = cal_.ai_is_high ? "1" : "0";
  return ckpt;
}

PplRatioDetector PplRatioDetector::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.section() != "detector.ppl-ratio") {
    throw StructuralError("checkpoint section is '" + ckpt.section() + "', expected 'detector.ppl-ratio'");
  }
  RatioCalibration cal{std::stod(ckpt.meta("cal.lo")), std::stod(ckpt.meta("cal.hi")),
                       ckpt.meta("cal.ai_is_high") == "1"};
  return PplRatioDetector(corpus::Vocabulary::deserialize(ckpt.meta("vocab")),
                          lm::NgramLM::from_checkpoint(unprefixed(ckpt, "observer.")),
                          lm::NgramLM::from_checkpoint(unprefixed(ckpt, "performer.")), cal);
}

PplRatioDetector fit_ppl_ratio(const std::vector<TokenSeq>& human_corpus, const std::vector<TokenSeq>& machine_corpus,
                               const corpus::Vocabulary& vocab, const PplRatioConfig& cfg) {
  if (human_corpus.empty() || machine_corpus.empty()) {
    throw ConfigError("ppl-ratio fit: both human and machine corpora are required");
  }
  std::vector<Ids> mixed;
  std::vector<Ids> machine;
  for (const auto& x : human_corpus) {
    mixed.push_back(vocab.encode(x));
  }
  for (const auto& x : machine_corpus) {
    machine.push_back(vocab.encode(x));
    mixed.push_back(machine.back());
  }
  auto observer = lm::NgramLM::fit(mixed, vocab.size(), cfg.order, cfg.alpha);
  auto performer = lm::NgramLM::fit(machine, vocab.size(), cfg.order, cfg.alpha);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double mean_h = 0.0;
  double mean_m = 0.0;
  auto raw = [&](const Ids& ids) {
    const double r = lm::perplexity(observer, ids) / lm::cross_perplexity(observer, performer, ids);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    return r;
  };
  for (std::size_t i = 0; i < human_corpus.size(); ++i) {
    mean_h += raw(mixed[i]);
  }
  for (const auto& ids : machine) {
    mean_m += raw(ids);
  }
  mean_h /= static_cast<double>(human_corpus.size());
  mean_m /= static_cast<double>(machine.size());
  if (!(hi - lo > 1e-12)) {
    throw ConfigError("ppl-ratio fit: raw scores are constant, cannot calibrate");
  }
  return PplRatioDetector(vocab, std::move(observer), std::move(performer), {lo, hi, mean_m > mean_h});
}

}  // namespace mash::detectors
