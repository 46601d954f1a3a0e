#pragma once

#include <cmath>
#include <span>
#include <unordered_map>
#include <vector>

#include "mash/nn/tensor.hpp"

namespace mash::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Moment state is created lazily (zeroed)
/// the first time a parameter is stepped.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) {
      throw ConfigError("AdamW: lr must be > 0");
    }
  }

  /// Applies one update to every parameter from its grad. Throws NumericError
  /// without touching any parameter if a gradient is non-finite.
  void step(std::span<Parameter<T>* const> params) {
    for (const auto* p : params) {
      for (T g : p->grad.data) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("AdamW: non-finite gradient in parameter '" + p->name + "'; step aborted");
        }
      }
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (auto* p : params) {
      auto& st = state_[p];
      if (st.m.size() != p->values.size()) {
        st.m.assign(p->values.size(), 0.0);
        st.v.assign(p->values.size(), 0.0);
      }
      for (std::size_t i = 0; i < p->values.data.size(); ++i) {
        const double g = static_cast<double>(p->grad.data[i]);
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
        const double m_hat = st.m[i] / bc1;
        const double v_hat = st.v[i] / bc2;
        double w = static_cast<double>(p->values.data[i]);
        w -= cfg_.lr * cfg_.weight_decay * w;
        w -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        p->values.data[i] = static_cast<T>(w);
      }
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  [[nodiscard]] long long step_count() const { return steps_; }
  [[nodiscard]] const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamWConfig cfg_;
  long long steps_ = 0;
  std::unordered_map<const Parameter<T>*, Moments> state_;
};

/// Global L2 norm over all gradients.
template <typename T>
double grad_norm(std::span<Parameter<T>* const> params) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (T g : p->grad.data) {
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  return std::sqrt(sq);
}

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the pre-clip norm.
template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const auto f = static_cast<T>(max_norm / norm);
    for (auto* p : params) {
      for (auto& g : p->grad.data) {
        g *= f;
      }
    }
  }
  return norm;
}

template <typename T>
void zero_grads(std::span<Parameter<T>* const> params) {
  for (auto* p : params) {
    p->zero_grad();
  }
}

}  // namespace mash::nn
