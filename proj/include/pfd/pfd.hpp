#pragma once

#include <string>
#include <vector>

#include "pfd/backbone.hpp"
#include "pfd/flow.hpp"
#include "pfd/optimizer.hpp"
#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"
#include "pfd/world.hpp"

namespace pfd {

struct AdapterConfig {
  int width = 64;
  int tau_dim = 16;
  int action_dim = 2;
};

/// Token-wise residual corrector: linear projection of the live base action
/// velocity, concatenated with a sinusoidal embedding of tau_a, through two
/// SiLU hidden layers into a zero-initialized output projection.
struct AdapterParams {
  AdapterConfig cfg;
  Tensor in_w, in_b;
  Tensor h1_w, h1_b;
  Tensor h2_w, h2_b;
  Tensor out_w, out_b;  // exactly zero at construction
};

AdapterParams init_adapter(const AdapterConfig& cfg, Rng& rng);
void for_each_param(AdapterParams& adapter,
                    const std::function<void(const std::string&, Tensor&)>& fn);
std::vector<std::pair<std::string, Tensor>> named_params(AdapterParams& adapter);
std::vector<Tensor> adapter_tensors(AdapterParams& adapter);
AdapterParams detached_view(const AdapterParams& adapter);
void fill_from_checkpoint(AdapterParams& adapter, const Checkpoint& ckpt);

struct AdapterOut {
  Tensor delta_hat;
  Tensor v_final;
};

/// v_base: (B, H, action_dim), consumed live so gradients reach the backbone
/// through the adapter input.
AdapterOut adapter_apply(Tape& tape, AdapterParams& adapter, const Tensor& v_base, double tau_a);

/// r = v_teacher - v_base on values, carrying no gradient.
Tensor foresight_residual(const Tensor& v_teacher, const Tensor& v_base);

struct LossWeights {
  double video = 1.0;
  double gt = 1.0;
  double res = 0.5;
  double teacher = 0.1;
};

struct LossBreakdown {
  double video = 0.0;
  double gt = 0.0;
  double res = 0.0;
  double teacher = 0.0;
  double total = 0.0;
};

struct PfdOutputs {
  Tensor v_base, v_teacher, r, delta_hat, v_final;
};

struct LossGraph {
  LossBreakdown values;
  Tensor total;  // on-tape scalar; undefined when no term participates
};

/// Components: L_video = w_v*mean((u_video-u_target)^2), L_gt =
/// w_a*mean((v_final-v_target)^2), L_res = mean((delta_hat-r)^2), L_teacher =
/// mean((v_final-v_teacher)^2); total weighted by `weights`. Terms with zero
/// weight are reported but kept out of the gradient graph. r or v_teacher may
/// be undefined when their weights are zero.
LossGraph compute_losses(Tape& tape, const Tensor& u_video, const Tensor& u_target,
                         const Tensor& v_final, const Tensor& v_target, const Tensor& delta_hat,
                         const Tensor& r, const Tensor& v_teacher, const LossWeights& weights,
                         double w_v, double w_a);

struct TrainStepConfig {
  LossWeights weights;
  WeightSchedule sched;
  bool use_teacher = true;
  bool use_adapter = true;
  bool shuffle_future_frames = false;  // teacher sees derangement-shuffled futures
};

struct StepDiagnostics {
  double tau_v = 0.0, tau_a = 0.0;
  double max_r = 0.0, max_delta = 0.0;
  double grad_norm_preclip = 0.0, lr = 0.0;
  double student_action_loss = 0.0;  // mean((v_base - v_target)^2)
  double teacher_action_loss = 0.0;  // mean((v_teacher - v_target)^2), teacher runs only
  bool teacher_ran = false;
  bool teacher_saw_shuffled = false;
};

struct TrainStepResult {
  LossBreakdown losses;
  StepDiagnostics diag;
  PfdOutputs outputs;
};

/// One optimizer step: student forward under the student mask, optional
/// teacher forward under the teacher mask with the same noise and detached
/// parameters, adapter correction, weighted losses, backward, AdamW update of
/// exactly `trainable`.
TrainStepResult train_step(MoTParams& params, AdapterParams& adapter,
                           const TrajectoryBatch& batch, const TrainStepConfig& cfg, AdamW& opt,
                           const std::vector<Tensor>& trainable, Rng& rng);

}  // namespace pfd
