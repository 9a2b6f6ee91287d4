#include "pfd/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace pfd {

AdamW::StepInfo AdamW::step(const std::vector<Tensor>& trainable, const GradMap& grads) {
  StepInfo info;
  if (cfg_.total_steps < 1) throw std::runtime_error("optimizer horizon must be positive");
  double progress = static_cast<double>(t_) / cfg_.total_steps;
  info.lr = cfg_.lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
  ++t_;

  double sq = 0.0;
  for (const Tensor& p : trainable) {
    auto it = grads.find(p.uid());
    if (it == grads.end()) continue;
    for (double g : it->second.values()) sq += g * g;
  }
  info.grad_norm_preclip = std::sqrt(sq);
  double clip_scale = 1.0;
  if (cfg_.clip_norm > 0.0 && info.grad_norm_preclip > cfg_.clip_norm)
    clip_scale = cfg_.clip_norm / info.grad_norm_preclip;

  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Tensor p : trainable) {
    auto it = grads.find(p.uid());
    if (it == grads.end()) continue;
    auto& [m, v] = moments_[p.uid()];
    if (m.empty()) {
      m.assign(static_cast<size_t>(p.size()), 0.0);
      v.assign(static_cast<size_t>(p.size()), 0.0);
    }
    const auto& g = it->second.values();
    auto& values = p.raw_values();
    for (size_t i = 0; i < g.size(); ++i) {
      double gc = g[i] * clip_scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gc;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gc * gc;
      double m_hat = m[i] / bc1;
      double v_hat = v[i] / bc2;
      values[i] -= info.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                              cfg_.weight_decay * values[i]);
    }
  }
  return info;
}

}  // namespace pfd
