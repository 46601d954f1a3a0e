#include "mash/detectors/supervised.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "mash/rng.hpp"

namespace mash::detectors {
namespace {

double logistic(double z) {
  if (z >= 0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Example {
  std::vector<std::uint32_t> feats;
  double y = 0.0;
};

std::vector<Example> featurize(const HashedFeaturizer& fz, const std::vector<LabeledSeq>& data) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& d : data) {
    if (d.label != Label::Human && d.label != Label::AI) {
      throw ConfigError("supervised detector: training example without a Human/AI label");
    }
    out.push_back({fz.features(d.tokens), d.label == Label::AI ? 1.0 : 0.0});
  }
  return out;
}

SupervisedDetector train(const HashedFeaturizer& fz, std::vector<double> w, double b,
                         const std::vector<LabeledSeq>& data, const SupervisedConfig& cfg, FitReport* report) {
  const auto examples = featurize(fz, data);
  const double n = static_cast<double>(examples.size());
  std::vector<double> grad(w.size());
  double prev_loss = std::numeric_limits<double>::infinity();
  FitReport rep;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0.0;
    double loss = 0.0;
    for (const auto& ex : examples) {
      double z = b;
      for (auto f : ex.feats) {
        z += w[f];
      }
      const double p = logistic(z);
      // log(1 + e^-|z|) form keeps the loss finite for large |z|
      loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - ex.y * z;
      const double r = p - ex.y;
      for (auto f : ex.feats) {
        grad[f] += r;
      }
      grad_b += r;
    }
    loss /= n;
    double reg = 0.0;
    for (double wi : w) {
      reg += wi * wi;
    }
    loss += 0.5 * cfg.l2 * reg;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= cfg.lr * (grad[i] / n + cfg.l2 * w[i]);
    }
    b -= cfg.lr * grad_b / n;
    if (!std::isfinite(loss)) {
      throw NumericError("supervised detector: non-finite training loss");
    }
    rep.epochs = epoch + 1;
    rep.final_loss = loss;
    if (std::abs(prev_loss - loss) < cfg.tolerance) {
      rep.converged = true;
      break;
    }
    prev_loss = loss;
  }
  if (report != nullptr) {
    *report = rep;
  }
  std::vector<float> wf(w.begin(), w.end());
  return SupervisedDetector(fz, std::move(wf), static_cast<float>(b));
}

void require_both_labels(const std::vector<LabeledSeq>& train) {
  bool human = false;
  bool ai = false;
  for (const auto& d : train) {
    human = human || d.label == Label::Human;
    ai = ai || d.label == Label::AI;
  }
  if (!human || !ai) {
    throw ConfigError("supervised detector: training data must contain both Human and AI examples");
  }
}

}  // namespace

HashedFeaturizer::HashedFeaturizer(std::size_t dim, std::uint64_t seed)
    : dim_(dim), shift_(0), seed_(seed), multiplier_(derive_seed(seed, 0) | 1ULL) {
  if (dim == 0 || !std::has_single_bit(dim) || dim > (1ULL << 31)) {
    throw ConfigError("hashed feature dimension must be a power of two");
  }
  shift_ = 64U - static_cast<unsigned>(std::countr_zero(dim));
}

std::uint32_t HashedFeaturizer::bucket(std::uint64_t h) const {
  if (dim_ == 1) {
    return 0;
  }
  return static_cast<std::uint32_t>((h * multiplier_) >> shift_);
}

std::vector<std::uint32_t> HashedFeaturizer::features(const TokenSeq& x) const {
  std::vector<std::uint32_t> out;
  out.reserve(2 * x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.push_back(bucket(fnv1a(x[i], fnv1a("u:"))));
    if (i + 1 < x.size()) {
      out.push_back(bucket(fnv1a(x[i + 1], fnv1a(" ", fnv1a(x[i], fnv1a("b:"))))));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SupervisedDetector::SupervisedDetector(HashedFeaturizer featurizer, std::vector<float> weights, float bias)
    : featurizer_(featurizer), weights_(std::move(weights)), bias_(bias) {
  if (weights_.size() != featurizer_.dim()) {
    throw StructuralError("supervised detector: weight count does not match feature dimension");
  }
  for (float w : weights_) {
    if (!std::isfinite(w)) {
      throw NumericError("supervised detector: non-finite weight");
    }
  }
}

double SupervisedDetector::evaluate(const TokenSeq& x) const {
  double z = bias_;
  for (auto f : featurizer_.features(x)) {
    z += weights_[f];
  }
  return logistic(z);
}

nn::Checkpoint SupervisedDetector::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.tensors.push_back({"supervised.weights", {1, static_cast<std::uint32_t>(weights_.size())}, weights_});
  ckpt.tensors.push_back({"supervised.bias", {1, 1}, {bias_}});
  ckpt.metadata["section"] = "detector.supervised";
  ckpt.metadata["dim"] = std::to_string(featurizer_.dim());
  ckpt.metadata["hash_seed"] = std::to_string(featurizer_.seed());
  return ckpt;
}

SupervisedDetector SupervisedDetector::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.section() != "detector.supervised") {
    throw StructuralError("checkpoint section is '" + ckpt.section() + "', expected 'detector.supervised'");
  }
  HashedFeaturizer fz(std::stoull(ckpt.meta("dim")), std::stoull(ckpt.meta("hash_seed")));
  return SupervisedDetector(fz, ckpt.tensor("supervised.weights").values, ckpt.tensor("supervised.bias").values.at(0));
}

SupervisedDetector fit_supervised(const std::vector<LabeledSeq>& train_set, const SupervisedConfig& cfg,
                                  FitReport* report) {
  require_both_labels(train_set);
  HashedFeaturizer fz(cfg.dim, cfg.seed);
  return train(fz, std::vector<double>(cfg.dim, 0.0), 0.0, train_set, cfg, report);
}

SupervisedDetector fine_tune_supervised(const SupervisedDetector& start, const std::vector<LabeledSeq>& train_set,
                                        const SupervisedConfig& cfg, FitReport* report) {
  require_both_labels(train_set);
  std::vector<double> w(start.weights().begin(), start.weights().end());
  return train(start.featurizer(), std::move(w), start.bias(), train_set, cfg, report);
}

double accuracy(const Detector& detector, const std::vector<LabeledSeq>& data, double threshold) {
  if (data.empty()) {
    throw ContractViolation("accuracy: empty data");
  }
  std::size_t correct = 0;
  for (const auto& d : data) {
    correct += decide_from_score(detector.evaluate(d.tokens), threshold) == d.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace mash::detectors
