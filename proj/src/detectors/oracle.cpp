#include "mash/detectors/oracle.hpp"

#include <cmath>

#include "mash/detectors/ppl_ratio.hpp"
#include "mash/detectors/supervised.hpp"

namespace mash::detectors {

Label decide_from_score(double score, double threshold) { return score > threshold ? Label::AI : Label::Human; }

DetectorOracle::DetectorOracle(std::shared_ptr<const Detector> backend, double threshold)
    : backend_(std::move(backend)), threshold_(threshold) {
  if (!backend_) {
    throw ConfigError("detector oracle: no backend");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("detector oracle: threshold must be in (0, 1)");
  }
}

double DetectorOracle::score(const TokenSeq& x) const {
  if (x.empty()) {
    throw ContractViolation("detector oracle: empty input");
  }
  queries_.fetch_add(1);
  const double s = backend_->evaluate(x);
  if (!(s >= 0.0 && s <= 1.0)) {
    throw OracleUnavailable("detector '" + backend_->backend() + "' returned a score outside [0, 1]");
  }
  return s;
}

Label DetectorOracle::decide(const TokenSeq& x) const { return decide_from_score(score(x), threshold_); }

std::shared_ptr<const Detector> detector_from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto section = ckpt.section();
  if (section == "detector.supervised") {
    return std::make_shared<SupervisedDetector>(SupervisedDetector::from_checkpoint(ckpt));
  }
  if (section == "detector.ppl-ratio") {
    return std::make_shared<PplRatioDetector>(PplRatioDetector::from_checkpoint(ckpt));
  }
  throw StructuralError("checkpoint section '" + section + "' is not a detector");
}

std::shared_ptr<const Detector> load_detector(const std::filesystem::path& path) {
  return detector_from_checkpoint(nn::load_checkpoint(path));
}

}  // namespace mash::detectors
