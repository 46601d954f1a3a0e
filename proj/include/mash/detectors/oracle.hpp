#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "mash/common.hpp"
#include "mash/nn/checkpoint.hpp"

namespace mash::detectors {

/// A scoring backend. evaluate() returns an AI-likelihood in [0, 1] and must
/// be safe to call concurrently on a fitted detector.
class Detector {
 public:
  virtual ~Detector() = default;
  [[nodiscard]] virtual double evaluate(const TokenSeq& x) const = 0;
  [[nodiscard]] virtual std::string backend() const = 0;
  /// Serialized form; external backends have none and throw ConfigError.
  [[nodiscard]] virtual nn::Checkpoint to_checkpoint() const = 0;
};

/// Label rule: AI iff score > threshold (a score equal to the threshold is Human).
Label decide_from_score(double score, double threshold);

/// Black-box oracle D(x) with exact query accounting.
class DetectorOracle {
 public:
  DetectorOracle(std::shared_ptr<const Detector> backend, double threshold = 0.5);

  /// One query. Throws ContractViolation on empty x and OracleUnavailable
  /// when the backend fails or returns a score outside [0, 1].
  double score(const TokenSeq& x) const;
  /// One query (via score).
  Label decide(const TokenSeq& x) const;

  [[nodiscard]] double threshold() const { return threshold_; }
  [[nodiscard]] std::uint64_t query_count() const { return queries_.load(); }
  void reset_queries() { queries_.store(0); }
  [[nodiscard]] const Detector& backend() const { return *backend_; }
  [[nodiscard]] std::shared_ptr<const Detector> backend_ptr() const { return backend_; }

 private:
  std::shared_ptr<const Detector> backend_;
  double threshold_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

/// Restores a supervised or ppl-ratio detector from its checkpoint.
std::shared_ptr<const Detector> load_detector(const std::filesystem::path& path);
std::shared_ptr<const Detector> detector_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace mash::detectors
