#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mash/common.hpp"
#include "mash/lm/text_lm.hpp"

namespace mash::eval {

/// Fraction of scores strictly below tau. Throws ContractViolation when empty.
double asr(std::span<const double> scores, double tau = 0.5);

/// F1 of the unigram multisets; precision against a, recall against b.
/// Throws ContractViolation when either side is empty.
double similarity(const TokenSeq& a, const TokenSeq& b);

struct RocPoint {
  double threshold = 0.0;  // positive (machine) iff score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auroc = 0.0;            // trapezoid
  double auroc_mann_whitney = 0.0;
  double tpr_at_1pct_fpr = 0.0;
};

/// Machine text is the positive class. Throws ContractViolation on an empty side.
RocResult roc(std::span<const double> human_scores, std::span<const double> machine_scores);
/// P(machine > human) + P(machine = human) / 2 by rank sums.
double mann_whitney_auc(std::span<const double> human_scores, std::span<const double> machine_scores);
/// Largest TPR among points whose FPR does not exceed target.
double tpr_at_fpr(const std::vector<RocPoint>& points, double target);

/// (train_queries + n * infer_queries_per_sample) / n. Throws ContractViolation when n < 1.
double amortized_cost(double train_queries, double infer_queries_per_sample, std::int64_t n);

struct ConstraintConfig {
  double epsilon = 0.5;  // minimum similarity to the source machine text
  double delta = 100.0;  // maximum perplexity under the evaluation LM

  void validate() const;
};

struct ConstraintResult {
  bool pass = false;
  double similarity = 0.0;
  double ppl = 0.0;
  std::vector<std::string> reasons;
};

ConstraintResult check_constraints(const TokenSeq& x_adv, const TokenSeq& x_ai, const ConstraintConfig& cfg,
                                   const lm::TextLM& eval_lm);

struct MetricsReport {
  std::string run;
  std::size_t n = 0;
  double tau = 0.5;
  double asr = 0.0;
  double constrained_asr = 0.0;  // evading and within the similarity/perplexity constraints
  double mean_ppl = 0.0;
  double mean_similarity = 0.0;
  std::optional<RocResult> roc;
  std::uint64_t queries_total = 0;
  double queries_per_sample = 0.0;
  std::size_t similarity_violations = 0;
  std::size_t ppl_violations = 0;

  [[nodiscard]] std::string to_json() const;
  static std::string csv_header();
  [[nodiscard]] std::string csv_row() const;
};

struct AttackSample {
  std::string id;
  TokenSeq x_ai;   // source machine text
  TokenSeq x_adv;  // attack output
  double score = 0.0;
};

/// Aggregates per-sample scores and constraint checks in input order.
MetricsReport summarize_attack(const std::string& run, std::span<const AttackSample> samples, double tau,
                               const ConstraintConfig& constraints, const lm::TextLM& eval_lm,
                               std::uint64_t queries_total);

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

}  // namespace mash::eval
