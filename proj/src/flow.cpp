#include "pfd/flow.hpp"

#include <stdexcept>

namespace pfd {

std::pair<double, double> sample_timesteps(Rng& rng) {
  double tau_v = rng.uniform();
  double tau_a = rng.uniform();
  return {tau_v, tau_a};
}

namespace {

Tensor lerp_noise(const Tensor& clean, const Tensor& eps, double tau) {
  if (clean.shape() != eps.shape())
    throw std::runtime_error("corrupt: noise shape " + shape_str(eps.shape()) +
                             " does not match data " + shape_str(clean.shape()));
  std::vector<double> out(clean.values());
  const auto& ev = eps.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - tau) * ev[i] + tau * out[i];
  return Tensor::constant(clean.shape(), std::move(out));
}

Tensor elementwise_diff(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Tensor::constant(a.shape(), std::move(out));
}

}  // namespace

FlowSample corrupt(const Tensor& X, const Tensor& A, double tau_v, double tau_a,
                   const Tensor& eps_v, const Tensor& eps_a) {
  if (tau_v < 0.0 || tau_v > 1.0 || tau_a < 0.0 || tau_a > 1.0)
    throw std::runtime_error("corrupt: timesteps must lie in [0,1]");
  if (X.shape() != eps_v.shape() || A.shape() != eps_a.shape())
    throw std::runtime_error("corrupt: noise shapes must match the clean tensors");
  FlowSample s;
  s.tau_v = tau_v;
  s.tau_a = tau_a;
  s.eps_v = eps_v;
  s.eps_a = eps_a;
  s.X_corrupted = tau_v == 1.0 ? X : (tau_v == 0.0 ? eps_v : lerp_noise(X, eps_v, tau_v));
  s.A_corrupted = tau_a == 1.0 ? A : (tau_a == 0.0 ? eps_a : lerp_noise(A, eps_a, tau_a));
  s.u_target = elementwise_diff(X, eps_v);
  s.v_target = elementwise_diff(A, eps_a);
  return s;
}

std::pair<double, double> schedule_weights(const WeightSchedule& sched, double tau_v,
                                           double tau_a) {
  if (tau_v < 0.0 || tau_v > 1.0 || tau_a < 0.0 || tau_a > 1.0)
    throw std::runtime_error("schedule_weights: timesteps must lie in [0,1]");
  double w_v = sched.w_v(tau_v);
  double w_a = sched.w_a(tau_a);
  if (!(w_v > 0.0) || !(w_a > 0.0))
    throw std::runtime_error("schedule_weights: schedule must be strictly positive");
  return {w_v, w_a};
}

}  // namespace pfd
