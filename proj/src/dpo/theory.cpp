#include "mash/dpo/theory.hpp"

#include <algorithm>
#include <cmath>

#include "mash/common.hpp"
#include "mash/nn/graph.hpp"
#include "mash/nn/optim.hpp"

namespace mash::dpo {

double bradley_terry_prob(double d_w, double d_l, double c) {
  const double z = c * (d_l - d_w);
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

void TheoryToy::validate() const {
  if (pi_ref.empty() || pi_ref.size() != d.size()) {
    throw ConfigError("theory toy: pi_ref and D must be non-empty and equally long");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pi_ref.size(); ++i) {
    if (!(pi_ref[i] >= 0.0) || !(d[i] >= 0.0 && d[i] <= 1.0)) {
      throw ConfigError("theory toy: pi_ref must be >= 0 and D in [0, 1]");
    }
    total += pi_ref[i];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("theory toy: pi_ref must sum to 1");
  }
  if (!(c >= 0.0)) {
    throw ConfigError("theory toy: C must be >= 0");
  }
}

double log_partition(const TheoryToy& toy, double beta) {
  toy.validate();
  // log-sum-exp over the support
  double top = -INFINITY;
  for (std::size_t y = 0; y < toy.pi_ref.size(); ++y) {
    if (toy.pi_ref[y] > 0.0) {
      top = std::max(top, std::log(toy.pi_ref[y]) + toy.reward(y) / beta);
    }
  }
  double sum = 0.0;
  for (std::size_t y = 0; y < toy.pi_ref.size(); ++y) {
    if (toy.pi_ref[y] > 0.0) {
      sum += std::exp(std::log(toy.pi_ref[y]) + toy.reward(y) / beta - top);
    }
  }
  return top + std::log(sum);
}

std::vector<double> closed_form_policy(const TheoryToy& toy, double beta) {
  if (!(beta > 0.0)) {
    throw ConfigError("closed_form_policy: beta must be > 0");
  }
  const double log_z = log_partition(toy, beta);
  std::vector<double> out(toy.pi_ref.size(), 0.0);
  for (std::size_t y = 0; y < out.size(); ++y) {
    if (toy.pi_ref[y] > 0.0) {
      out[y] = std::exp(std::log(toy.pi_ref[y]) + toy.reward(y) / beta - log_z);
    }
  }
  return out;
}

std::vector<double> tabular_dpo_convergence(const TheoryToy& toy, double beta, const TabularConfig& cfg) {
  toy.validate();
  if (!(beta > 0.0)) {
    throw ConfigError("tabular_dpo_convergence: beta must be > 0");
  }
  std::vector<std::size_t> support;
  for (std::size_t y = 0; y < toy.pi_ref.size(); ++y) {
    if (toy.pi_ref[y] > 0.0) {
      support.push_back(y);
    }
  }
  const std::size_t n = support.size();
  std::vector<double> out(toy.pi_ref.size(), 0.0);
  if (n == 1) {
    out[support[0]] = 1.0;
    return out;
  }
  // Pair k compares (i, j): column k of `diff` is e_i - e_j, so
  // log pi . diff gives log pi(i) - log pi(j) for every pair at once.
  const std::size_t pairs = n * (n - 1) / 2;
  nn::Matrix<double> diff(n, pairs);
  nn::Matrix<double> ref_gap(1, pairs);
  nn::Matrix<double> p_win(pairs, 1);
  nn::Matrix<double> p_lose(pairs, 1);
  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b, ++k) {
      const auto i = support[a];
      const auto j = support[b];
      diff(a, k) = 1.0;
      diff(b, k) = -1.0;
      ref_gap(0, k) = -(std::log(toy.pi_ref[i]) - std::log(toy.pi_ref[j]));
      p_win(k, 0) = bradley_terry_prob(toy.d[i], toy.d[j], toy.c);  // i preferred over j
      p_lose(k, 0) = 1.0 - p_win(k, 0);
    }
  }
  nn::Matrix<double> init(1, n);
  for (std::size_t a = 0; a < n; ++a) {
    init(0, a) = std::log(toy.pi_ref[support[a]]);
  }
  nn::Parameter<double> logits("tabular.logits", init);
  nn::Parameter<double>* plist[] = {&logits};
  nn::AdamW<double> opt({cfg.lr, 0.0});
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    nn::Graph<double> g;
    const auto log_pi = g.log(g.softmax(g.parameter(logits)));
    const auto z = g.scale(g.add(g.matmul(log_pi, g.constant(diff)), g.constant(ref_gap)), beta);
    const auto win = g.matmul(g.log(g.sigmoid(z)), g.constant(p_win));
    const auto lose = g.matmul(g.log(g.sigmoid(g.scale(z, -1.0))), g.constant(p_lose));
    const auto loss = g.scale(g.add(win, lose), -1.0);
    if (!std::isfinite(g.scalar(loss))) {
      throw NumericError("tabular DPO diverged at step " + std::to_string(step));
    }
    logits.zero_grad();
    g.backward(loss);
    opt.step(plist);
  }
  nn::Graph<double> g;
  const auto& pi = g.value(g.softmax(g.parameter(logits)));
  for (std::size_t a = 0; a < n; ++a) {
    out[support[a]] = pi(0, a);
  }
  return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) {
    throw ContractViolation("kl_divergence: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (!(q[i] > 0.0)) {
        return INFINITY;
      }
      kl += p[i] * std::log(p[i] / q[i]);
    }
  }
  return kl;
}

}  // namespace mash::dpo
