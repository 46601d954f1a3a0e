#pragma once

#include <functional>
#include <vector>

#include "mash/corpus/document.hpp"
#include "mash/detectors/oracle.hpp"

namespace mash::corpus {

using Styler = std::function<Document(const Document&)>;

struct PairBuildReport {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  std::size_t queries = 0;

  [[nodiscard]] double acceptance_rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(attempts);
  }
};

/// Number of leading attempts over which the acceptance floor is checked.
inline constexpr std::size_t kAcceptanceWindow = 1000;
inline constexpr double kMinAcceptance = 0.01;

/// Styles each human document and keeps the pair when the oracle scores the
/// human side below tau and the styled side above it. Documents are visited
/// in input order; stops at max_pairs. Throws DistributionMismatch when fewer
/// than 1% of the first 1000 attempts (or of all attempts, for a shorter
/// corpus) are accepted.
std::vector<ParallelPair> build_pairs(const std::vector<Document>& human_docs,
                                      const detectors::DetectorOracle& filter_oracle, const Styler& styler,
                                      std::size_t max_pairs, PairBuildReport* report = nullptr);

/// True when the pair still satisfies the filter against `oracle`.
bool pair_satisfies_filter(const ParallelPair& pair, const detectors::DetectorOracle& oracle);

}  // namespace mash::corpus
