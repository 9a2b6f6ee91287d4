#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"

namespace pfd_test {

/// Max guarded relative error between tape gradients and central finite
/// differences over every element of every leaf. The builder must be a pure
/// function of the leaves' current values.
inline double fd_max_rel_error(const std::function<pfd::Tensor(pfd::Tape&)>& build,
                               const std::vector<pfd::Tensor>& leaves, double step = 1e-5) {
  pfd::Tape tape;
  pfd::Tensor loss = build(tape);
  pfd::GradMap grads = pfd::backward(loss, tape);

  auto eval = [&]() {
    pfd::Tape t;
    return build(t).scalar_value();
  };

  double max_rel = 0.0;
  for (pfd::Tensor leaf : leaves) {
    auto it = grads.find(leaf.uid());
    for (int64_t i = 0; i < leaf.size(); ++i) {
      double saved = leaf.raw_values()[static_cast<size_t>(i)];
      leaf.raw_values()[static_cast<size_t>(i)] = saved + step;
      double f_plus = eval();
      leaf.raw_values()[static_cast<size_t>(i)] = saved - step;
      double f_minus = eval();
      leaf.raw_values()[static_cast<size_t>(i)] = saved;
      double fd = (f_plus - f_minus) / (2.0 * step);
      double analytic = it == grads.end() ? 0.0 : it->second.at(i);
      double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic)});
      max_rel = std::max(max_rel, std::fabs(analytic - fd) / denom);
    }
  }
  return max_rel;
}

inline pfd::Tensor random_param(pfd::Rng& rng, pfd::Shape shape, double lo = -2.0,
                                double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(pfd::shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return pfd::Tensor::param(std::move(shape), std::move(v));
}

inline pfd::Tensor random_const(pfd::Rng& rng, pfd::Shape shape, double lo = -2.0,
                                double hi = 2.0) {
  std::vector<double> v(static_cast<size_t>(pfd::shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return pfd::Tensor::constant(std::move(shape), std::move(v));
}

/// Contracts an arbitrary tensor to a scalar with fixed random weights so
/// every output element receives a distinct gradient.
inline pfd::Tensor weighted_sum(pfd::Tape& tape, const pfd::Tensor& x, const pfd::Tensor& w) {
  return pfd::sum_all(tape, pfd::mul(tape, x, w));
}

}  // namespace pfd_test
