#include "mash/corpus/pairs.hpp"

#include <cstdio>

namespace mash::corpus {
namespace {

void check_acceptance(const PairBuildReport& rep) {
  if (rep.acceptance_rate() < kMinAcceptance) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "build_pairs: accepted %zu of %zu attempts (%.4f < %.2f)", rep.accepted,
                  rep.attempts, rep.acceptance_rate(), kMinAcceptance);
    throw DistributionMismatch(buf);
  }
}

}  // namespace

std::vector<ParallelPair> build_pairs(const std::vector<Document>& human_docs,
                                      const detectors::DetectorOracle& filter_oracle, const Styler& styler,
                                      std::size_t max_pairs, PairBuildReport* report) {
  std::vector<ParallelPair> out;
  PairBuildReport rep;
  const double tau = filter_oracle.threshold();
  bool window_checked = false;
  for (const auto& doc : human_docs) {
    if (out.size() >= max_pairs) {
      break;
    }
    if (doc.tokens.empty()) {
      continue;
    }
    ++rep.attempts;
    ParallelPair p;
    p.x_human = doc;
    p.x_ai = styler(doc);
    p.d_human = filter_oracle.score(p.x_human.tokens);
    ++rep.queries;
    if (p.d_human < tau && !p.x_ai.tokens.empty()) {
      p.d_ai = filter_oracle.score(p.x_ai.tokens);
      ++rep.queries;
      if (p.d_ai > tau) {
        out.push_back(std::move(p));
        ++rep.accepted;
      }
    }
    if (rep.attempts == kAcceptanceWindow) {
      check_acceptance(rep);
      window_checked = true;
    }
  }
  if (report != nullptr) {
    *report = rep;
  }
  if (!window_checked && max_pairs > 0) {
    check_acceptance(rep);
  }
  return out;
}

bool pair_satisfies_filter(const ParallelPair& pair, const detectors::DetectorOracle& oracle) {
  return oracle.score(pair.x_human.tokens) < oracle.threshold() && oracle.score(pair.x_ai.tokens) > oracle.threshold();
}

}  // namespace mash::corpus
