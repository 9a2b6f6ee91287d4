#pragma once

#include <functional>

#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"

namespace pfd {

/// One corruption draw along the linear path x_tau = (1-tau)*eps + tau*x,
/// with the constant velocity targets u = X - eps_v and v = A - eps_a.
struct FlowSample {
  double tau_v = 0.0, tau_a = 0.0;
  Tensor eps_v, eps_a;
  Tensor X_corrupted, A_corrupted;
  Tensor u_target, v_target;
};

struct WeightSchedule {
  std::function<double(double)> w_v = [](double) { return 1.0; };
  std::function<double(double)> w_a = [](double) { return 1.0; };
};

/// Two independent uniform draws on [0,1]; tau_v first.
std::pair<double, double> sample_timesteps(Rng& rng);

FlowSample corrupt(const Tensor& X, const Tensor& A, double tau_v, double tau_a,
                   const Tensor& eps_v, const Tensor& eps_a);

std::pair<double, double> schedule_weights(const WeightSchedule& sched, double tau_v,
                                           double tau_a);

}  // namespace pfd
