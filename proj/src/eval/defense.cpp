#include "mash/eval/defense.hpp"

#include <nlohmann/json.hpp>

#include "mash/eval/metrics.hpp"

namespace mash::eval {
namespace {

DefenseSnapshot snapshot(const detectors::Detector& det, std::span<const detectors::LabeledSeq> clean_test,
                         std::span<const TokenSeq> mash_test, double tau) {
  DefenseSnapshot s;
  std::vector<detectors::LabeledSeq> test(clean_test.begin(), clean_test.end());
  s.clean_accuracy = detectors::accuracy(det, test, tau);
  std::vector<double> scores;
  for (const auto& x : mash_test) {
    scores.push_back(det.evaluate(x));
  }
  s.asr = asr(scores, tau);
  return s;
}

}  // namespace

DefenseResult adversarial_defense(const detectors::SupervisedDetector& detector,
                                  std::span<const TokenSeq> clean_human, std::span<const TokenSeq> clean_machine,
                                  std::span<const TokenSeq> mash_outputs,
                                  std::span<const detectors::LabeledSeq> clean_test,
                                  std::span<const TokenSeq> mash_test, const DefenseConfig& cfg) {
  std::vector<detectors::LabeledSeq> mix;
  for (const auto& x : clean_human) {
    mix.push_back({x, Label::Human});
  }
  for (const auto& x : clean_machine) {
    mix.push_back({x, Label::AI});
  }
  for (const auto& x : mash_outputs) {
    if (!x.empty()) {
      mix.push_back({x, Label::AI});
    }
  }
  const std::size_t n_ai = mix.size() - clean_human.size();
  if (mix.empty()) {
    throw ConfigError("adversarial_defense: empty training mixture");
  }
  const double share = static_cast<double>(std::max(clean_human.size(), n_ai)) / static_cast<double>(mix.size());
  if (share > cfg.max_majority) {
    throw ConfigError("adversarial_defense: class mixture is " + std::to_string(clean_human.size()) + " human / " +
                      std::to_string(n_ai) + " AI, beyond the allowed imbalance");
  }
  DefenseResult r{detector, {}, {}, clean_human.size(), n_ai};
  r.before = snapshot(detector, clean_test, mash_test, cfg.tau);
  r.detector = detectors::fine_tune_supervised(detector, mix, cfg.fine_tune);
  r.after = snapshot(r.detector, clean_test, mash_test, cfg.tau);
  return r;
}

std::string defense_json(const DefenseResult& r) {
  nlohmann::ordered_json j;
  j["human_samples"] = r.human_samples;
  j["ai_samples"] = r.ai_samples;
  j["before"] = {{"clean_accuracy", r.before.clean_accuracy}, {"asr", r.before.asr}};
  j["after"] = {{"clean_accuracy", r.after.clean_accuracy}, {"asr", r.after.asr}};
  return j.dump(2);
}

}  // namespace mash::eval
