#pragma once

#include <cmath>
#include <functional>

#include "mash/nn/graph.hpp"

namespace mash::nn {

/// Builds a loss graph over bound parameters and returns the loss node.
template <typename T>
using LossBuilderT = std::function<NodeId(Graph<T>&)>;
using LossBuilder = LossBuilderT<double>;

/// Max over entries of parameter of |analytic - numeric| / (|analytic| + 1e-8).
/// numeric is the central difference at step and step/2 combined by Richardson
/// extrapolation, so the h^2 truncation term cancels. T is double or long
/// double; the latter lowers the rounding floor of the differences for
/// entries whose gradient is near 1e-9. Returns 0 for an empty parameter.
template <typename T>
double grad_check(const LossBuilderT<T>& build, Parameter<T>& parameter, double step) {
  if (!(step > 0.0)) {
    throw ContractViolation("grad_check: step must be > 0");
  }
  if (parameter.values.size() == 0) {
    return 0.0;
  }
  auto eval = [&build]() {
    Graph<T> g;
    const T v = g.scalar(build(g));
    if (!std::isfinite(v)) {
      throw NumericError("grad_check: non-finite loss");
    }
    return v;
  };

  parameter.zero_grad();
  {
    Graph<T> g;
    const NodeId loss = build(g);
    if (!std::isfinite(g.scalar(loss))) {
      throw NumericError("grad_check: non-finite loss");
    }
    g.backward(loss);
  }
  const Matrix<T> analytic = parameter.grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < parameter.values.data.size(); ++i) {
    const T saved = parameter.values.data[i];
    auto central = [&](T h) {
      parameter.values.data[i] = saved + h;
      const T up = eval();
      parameter.values.data[i] = saved - h;
      const T down = eval();
      parameter.values.data[i] = saved;
      return (up - down) / (T{2} * h);
    };
    const T coarse = central(static_cast<T>(step));
    const T numeric = (T{4} * central(static_cast<T>(step) / T{2}) - coarse) / T{3};
    const auto a = static_cast<double>(analytic.data[i]);
    const double rel = std::abs(a - static_cast<double>(numeric)) / (std::abs(a) + 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

template <typename F, typename T>
double grad_check(const F& build, Parameter<T>& parameter, double step) {
  return grad_check<T>(LossBuilderT<T>(build), parameter, step);
}

}  // namespace mash::nn
