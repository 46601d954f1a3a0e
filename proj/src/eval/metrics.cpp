#include "mash/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <nlohmann/json.hpp>

#include "mash/corpus/document.hpp"

namespace mash::eval {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

double asr(std::span<const double> scores, double tau) {
  if (scores.empty()) {
    throw ContractViolation("asr: empty score list");
  }
  const auto below = std::count_if(scores.begin(), scores.end(), [tau](double s) { return s < tau; });
  return static_cast<double>(below) / static_cast<double>(scores.size());
}

double similarity(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) {
    throw ContractViolation("similarity: empty input");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& t : b) {
    ++counts[t];
  }
  std::size_t overlap = 0;
  for (const auto& t : a) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) {
    return 0.0;
  }
  const double precision = static_cast<double>(overlap) / static_cast<double>(a.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(b.size());
  return 2.0 * precision * recall / (precision + recall);
}

RocResult roc(std::span<const double> human_scores, std::span<const double> machine_scores) {
  if (human_scores.empty() || machine_scores.empty()) {
    throw ContractViolation("roc: both score lists must be non-empty");
  }
  std::vector<std::pair<double, bool>> all;  // (score, is_machine)
  all.reserve(human_scores.size() + machine_scores.size());
  for (double s : human_scores) {
    all.emplace_back(s, false);
  }
  for (double s : machine_scores) {
    all.emplace_back(s, true);
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  const auto n_pos = static_cast<double>(machine_scores.size());
  const auto n_neg = static_cast<double>(human_scores.size());
  RocResult r;
  r.points.push_back({INFINITY, 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].first;
    // every score tied at t crosses the threshold together
    while (i < all.size() && all[i].first == t) {
      (all[i].second ? tp : fp) += 1;
      ++i;
    }
    r.points.push_back({t, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }
  for (std::size_t k = 1; k < r.points.size(); ++k) {
    const auto& a = r.points[k - 1];
    const auto& b = r.points[k];
    r.auroc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  r.auroc_mann_whitney = mann_whitney_auc(human_scores, machine_scores);
  r.tpr_at_1pct_fpr = tpr_at_fpr(r.points, 0.01);
  return r;
}

double mann_whitney_auc(std::span<const double> human_scores, std::span<const double> machine_scores) {
  if (human_scores.empty() || machine_scores.empty()) {
    throw ContractViolation("mann_whitney_auc: both score lists must be non-empty");
  }
  std::vector<std::pair<double, bool>> all;
  for (double s : human_scores) {
    all.emplace_back(s, false);
  }
  for (double s : machine_scores) {
    all.emplace_back(s, true);
  }
  std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  // midranks, 1-based
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      ++j;
    }
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) {
        rank_sum += mid;
      }
    }
    i = j;
  }
  const auto n_pos = static_cast<double>(machine_scores.size());
  const auto n_neg = static_cast<double>(human_scores.size());
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double tpr_at_fpr(const std::vector<RocPoint>& points, double target) {
  double best = 0.0;
  for (const auto& p : points) {
    if (p.fpr <= target) {
      best = std::max(best, p.tpr);
    }
  }
  return best;
}

double amortized_cost(double train_queries, double infer_queries_per_sample, std::int64_t n) {
  if (n < 1) {
    throw ContractViolation("amortized_cost: N must be >= 1");
  }
  const auto nd = static_cast<double>(n);
  return (train_queries + nd * infer_queries_per_sample) / nd;
}

void ConstraintConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("constraints: epsilon must be in [0, 1]");
  }
  if (!(delta >= 1.0)) {
    throw ConfigError("constraints: delta must be >= 1");
  }
}

ConstraintResult check_constraints(const TokenSeq& x_adv, const TokenSeq& x_ai, const ConstraintConfig& cfg,
                                   const lm::TextLM& eval_lm) {
  cfg.validate();
  ConstraintResult r;
  if (x_adv.empty() || x_ai.empty()) {
    r.reasons.emplace_back("empty text");
    return r;
  }
  r.similarity = similarity(x_adv, x_ai);
  r.ppl = eval_lm.perplexity(x_adv);
  if (r.similarity < cfg.epsilon) {
    r.reasons.push_back("similarity " + fmt_double(r.similarity) + " < epsilon " + fmt_double(cfg.epsilon));
  }
  if (r.ppl > cfg.delta) {
    r.reasons.push_back("perplexity " + fmt_double(r.ppl) + " > delta " + fmt_double(cfg.delta));
  }
  r.pass = r.reasons.empty();
  return r;
}

MetricsReport summarize_attack(const std::string& run, std::span<const AttackSample> samples, double tau,
                               const ConstraintConfig& constraints, const lm::TextLM& eval_lm,
                               std::uint64_t queries_total) {
  if (samples.empty()) {
    throw ContractViolation("summarize_attack: no samples");
  }
  MetricsReport m;
  m.run = run;
  m.n = samples.size();
  m.tau = tau;
  std::vector<double> scores;
  std::size_t constrained = 0;
  std::size_t scored_ppl = 0;
  for (const auto& s : samples) {
    scores.push_back(s.score);
    const auto c = check_constraints(s.x_adv, s.x_ai, constraints, eval_lm);
    if (!s.x_adv.empty()) {
      m.mean_ppl += c.ppl;
      m.mean_similarity += c.similarity;
      ++scored_ppl;
    }
    m.similarity_violations += (s.x_adv.empty() || c.similarity < constraints.epsilon) ? 1 : 0;
    m.ppl_violations += (s.x_adv.empty() || c.ppl > constraints.delta) ? 1 : 0;
    constrained += (c.pass && s.score < tau) ? 1 : 0;
  }
  m.asr = asr(scores, tau);
  m.constrained_asr = static_cast<double>(constrained) / static_cast<double>(samples.size());
  if (scored_ppl > 0) {
    m.mean_ppl /= static_cast<double>(scored_ppl);
    m.mean_similarity /= static_cast<double>(scored_ppl);
  }
  m.queries_total = queries_total;
  m.queries_per_sample = static_cast<double>(queries_total) / static_cast<double>(samples.size());
  return m;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["run"] = run;
  j["n"] = n;
  j["tau"] = tau;
  j["asr"] = asr;
  j["constrained_asr"] = constrained_asr;
  j["mean_ppl"] = mean_ppl;
  j["mean_similarity"] = mean_similarity;
  j["queries_total"] = queries_total;
  j["queries_per_sample"] = queries_per_sample;
  j["similarity_violations"] = similarity_violations;
  j["ppl_violations"] = ppl_violations;
  if (roc) {
    j["auroc"] = roc->auroc;
    j["auroc_mann_whitney"] = roc->auroc_mann_whitney;
    j["tpr_at_1pct_fpr"] = roc->tpr_at_1pct_fpr;
    auto pts = nlohmann::json::array();
    for (const auto& p : roc->points) {
      pts.push_back({std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold), p.fpr, p.tpr});
    }
    j["roc_points"] = pts;
  }
  return j.dump(2);
}

std::string MetricsReport::csv_header() {
  return "run,n,tau,asr,constrained_asr,mean_ppl,mean_similarity,auroc,tpr_at_1pct_fpr,queries_total,"
         "queries_per_sample,similarity_violations,ppl_violations";
}

std::string MetricsReport::csv_row() const {
  std::string out = run + "," + std::to_string(n) + "," + fmt_double(tau) + "," + fmt_double(asr) + "," +
                    fmt_double(constrained_asr) + "," + fmt_double(mean_ppl) + "," + fmt_double(mean_similarity) +
                    ",";
  out += roc ? fmt_double(roc->auroc) + "," + fmt_double(roc->tpr_at_1pct_fpr) : std::string(",");
  out += "," + std::to_string(queries_total) + "," + fmt_double(queries_per_sample) + "," +
         std::to_string(similarity_violations) + "," + std::to_string(ppl_violations);
  return out;
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
  std::vector<std::string> lines{"threshold,fpr,tpr"};
  for (const auto& p : roc.points) {
    lines.push_back((std::isinf(p.threshold) ? std::string("inf") : fmt_double(p.threshold)) + "," +
                    fmt_double(p.fpr) + "," + fmt_double(p.tpr));
  }
  corpus::write_lines(path, lines);
}

}  // namespace mash::eval
