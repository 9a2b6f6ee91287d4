#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "pfd/tensor.hpp"

namespace pfd {

struct AdamConfig {
  double lr_peak = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 5.0;
  int total_steps = 2000;
};

/// AdamW with decoupled weight decay, cosine decay of the learning rate from
/// lr_peak to 0 over total_steps, and global-norm clipping applied to the
/// gradients before the moment updates. Only parameters present in the grad
/// map are touched.
class AdamW {
 public:
  explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

  struct StepInfo {
    double lr = 0.0;
    double grad_norm_preclip = 0.0;
  };

  StepInfo step(const std::vector<Tensor>& trainable, const GradMap& grads);
  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<int64_t, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace pfd
