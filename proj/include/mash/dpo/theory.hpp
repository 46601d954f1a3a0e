#pragma once

#include <cstddef>
#include <vector>

namespace mash::dpo {

/// sigmoid(C * (d_l - d_w)): probability that the lower-scored output wins.
double bradley_terry_prob(double d_w, double d_l, double c);

/// Finite outcome set with a reference distribution and detector scores.
struct TheoryToy {
  std::vector<double> pi_ref;  // sums to 1
  std::vector<double> d;       // detector score per outcome, in [0, 1]
  double c = 10.0;             // reward scale, r(y) = C (1 - D(y))

  /// Throws ConfigError when the invariants fail.
  void validate() const;
  [[nodiscard]] double reward(std::size_t y) const { return c * (1.0 - d[y]); }
};

/// pi*(y) = pi_ref(y) exp(r(y) / beta) / Z, Z by exact summation.
std::vector<double> closed_form_policy(const TheoryToy& toy, double beta);

/// Log partition log Z for the same quantity.
double log_partition(const TheoryToy& toy, double beta);

struct TabularConfig {
  std::size_t steps = 4000;
  double lr = 0.05;
};

/// Trains a softmax policy over the support of pi_ref with the DPO loss on
/// every unordered outcome pair, soft-labelled by bradley_terry_prob.
/// Outcomes outside the support keep probability 0. Throws NumericError on divergence.
std::vector<double> tabular_dpo_convergence(const TheoryToy& toy, double beta, const TabularConfig& cfg = {});

/// KL(p || q) in nats; terms with p = 0 contribute 0.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace mash::dpo
