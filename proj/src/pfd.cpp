#include "pfd/pfd.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(tape, matmul(tape, x, w), b);
}

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  const auto& av = a.values();
  const auto& bv = b.values();
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    double d = av[i] - bv[i];
    s += d * d;
  }
  return s / static_cast<double>(av.size());
}

}  // namespace

AdapterParams init_adapter(const AdapterConfig& cfg, Rng& rng) {
  check(cfg.width >= 1 && cfg.action_dim >= 1, "adapter dims must be positive");
  check(cfg.tau_dim >= 2 && cfg.tau_dim % 2 == 0, "adapter tau_dim must be even and >= 2");
  auto w = [&](int in, int out) {
    return Tensor::param({in, out}, normal_vec(rng, static_cast<int64_t>(in) * out,
                                               1.0 / std::sqrt(static_cast<double>(in))));
  };
  AdapterParams a;
  a.cfg = cfg;
  a.in_w = w(cfg.action_dim, cfg.width);
  a.in_b = Tensor::param_zeros({cfg.width});
  a.h1_w = w(cfg.width + cfg.tau_dim, cfg.width);
  a.h1_b = Tensor::param_zeros({cfg.width});
  a.h2_w = w(cfg.width, cfg.width);
  a.h2_b = Tensor::param_zeros({cfg.width});
  LinearInit out = linear_zero_init(cfg.width, cfg.action_dim);
  a.out_w = out.weight;
  a.out_b = out.bias;
  return a;
}

void for_each_param(AdapterParams& a,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("adapter.in_w", a.in_w);
  fn("adapter.in_b", a.in_b);
  fn("adapter.h1_w", a.h1_w);
  fn("adapter.h1_b", a.h1_b);
  fn("adapter.h2_w", a.h2_w);
  fn("adapter.h2_b", a.h2_b);
  fn("adapter.out_w", a.out_w);
  fn("adapter.out_b", a.out_b);
}

std::vector<std::pair<std::string, Tensor>> named_params(AdapterParams& adapter) {
  std::vector<std::pair<std::string, Tensor>> out;
  for_each_param(adapter, [&](const std::string& n, Tensor& t) { out.emplace_back(n, t); });
  return out;
}

std::vector<Tensor> adapter_tensors(AdapterParams& adapter) {
  std::vector<Tensor> out;
  for_each_param(adapter, [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

AdapterParams detached_view(const AdapterParams& adapter) {
  AdapterParams view = adapter;
  for_each_param(view, [](const std::string&, Tensor& t) { t = stop_gradient(t); });
  return view;
}

void fill_from_checkpoint(AdapterParams& adapter, const Checkpoint& ckpt) {
  for_each_param(adapter, [&](const std::string& name, Tensor& t) {
    const Tensor& src = ckpt.find(name);
    check(src.shape() == t.shape(), "checkpoint shape mismatch for " + name);
    t.raw_values() = src.values();
  });
}

AdapterOut adapter_apply(Tape& tape, AdapterParams& adapter, const Tensor& v_base, double tau_a) {
  check(v_base.rank() == 3 && v_base.dim(2) == adapter.cfg.action_dim,
        "adapter_apply: v_base must be (B, H, action_dim)");
  int B = v_base.dim(0), H = v_base.dim(1);
  Tensor z = linear(tape, v_base, adapter.in_w, adapter.in_b);
  Tensor tau_embed = sinusoidal_embed(tau_a, adapter.cfg.tau_dim);
  std::vector<double> tau_rows;
  tau_rows.reserve(static_cast<size_t>(B) * H * adapter.cfg.tau_dim);
  for (int i = 0; i < B * H; ++i)
    tau_rows.insert(tau_rows.end(), tau_embed.values().begin(), tau_embed.values().end());
  Tensor tau_b = Tensor::constant({B, H, adapter.cfg.tau_dim}, std::move(tau_rows));
  Tensor zt = concat(tape, z, tau_b, 2);
  Tensor h1 = silu(tape, linear(tape, zt, adapter.h1_w, adapter.h1_b));
  Tensor h2 = silu(tape, linear(tape, h1, adapter.h2_w, adapter.h2_b));
  AdapterOut out;
  out.delta_hat = linear(tape, h2, adapter.out_w, adapter.out_b);
  out.v_final = add(tape, v_base, out.delta_hat);
  return out;
}

Tensor foresight_residual(const Tensor& v_teacher, const Tensor& v_base) {
  check(v_teacher.defined() && v_base.defined() && v_teacher.shape() == v_base.shape(),
        "foresight_residual: shape mismatch");
  std::vector<double> r(v_teacher.values());
  const auto& bv = v_base.values();
  for (size_t i = 0; i < r.size(); ++i) r[i] -= bv[i];
  return Tensor::constant(v_teacher.shape(), std::move(r));
}

LossGraph compute_losses(Tape& tape, const Tensor& u_video, const Tensor& u_target,
                         const Tensor& v_final, const Tensor& v_target, const Tensor& delta_hat,
                         const Tensor& r, const Tensor& v_teacher, const LossWeights& weights,
                         double w_v, double w_a) {
  check(weights.video >= 0 && weights.gt >= 0 && weights.res >= 0 && weights.teacher >= 0,
        "loss weights must be non-negative");
  check(w_v > 0 && w_a > 0, "schedule weights must be positive");
  LossGraph lg;
  Tensor total;
  auto accumulate = [&](double lambda, const Tensor& term) {
    Tensor weighted = lambda == 1.0 ? term : scale(tape, term, lambda);
    total = total.defined() ? add(tape, total, weighted) : weighted;
  };

  if (u_video.defined() || weights.video > 0) {
    check(u_video.defined() && u_target.defined(), "video loss inputs missing");
    if (weights.video > 0) {
      Tensor term = scale(tape, mse(tape, u_video, u_target), w_v);
      lg.values.video = term.scalar_value();
      accumulate(weights.video, term);
    } else {
      lg.values.video = w_v * mean_sq_diff(u_video, u_target);
    }
  }
  check(v_final.defined() && v_target.defined(), "action loss inputs missing");
  if (weights.gt > 0) {
    Tensor term = scale(tape, mse(tape, v_final, v_target), w_a);
    lg.values.gt = term.scalar_value();
    accumulate(weights.gt, term);
  } else {
    lg.values.gt = w_a * mean_sq_diff(v_final, v_target);
  }
  if (weights.res > 0) {
    check(delta_hat.defined() && r.defined(), "residual loss requires the adapter and teacher");
    Tensor term = mse(tape, delta_hat, r);
    lg.values.res = term.scalar_value();
    accumulate(weights.res, term);
  } else if (delta_hat.defined() && r.defined()) {
    lg.values.res = mean_sq_diff(delta_hat, r);
  }
  if (weights.teacher > 0) {
    check(v_teacher.defined(), "teacher loss requires the teacher forward");
    Tensor term = mse(tape, v_final, v_teacher);
    lg.values.teacher = term.scalar_value();
    accumulate(weights.teacher, term);
  } else if (v_teacher.defined()) {
    lg.values.teacher = mean_sq_diff(v_final, v_teacher);
  }
  check(total.defined(), "no loss term has positive weight");
  lg.total = total;
  lg.values.total = total.scalar_value();
  return lg;
}

TrainStepResult train_step(MoTParams& params, AdapterParams& adapter,
                           const TrajectoryBatch& batch, const TrainStepConfig& cfg, AdamW& opt,
                           const std::vector<Tensor>& trainable, Rng& rng) {
  const BackboneConfig& bc = params.cfg;
  check(batch.X.rank() == 3 && batch.X.dim(1) == bc.frames && batch.X.dim(2) == bc.frame_dim,
        "train_step: batch frames do not match the backbone config");
  check(cfg.weights.teacher == 0.0 || cfg.use_teacher,
        "train_step: teacher loss weight needs the teacher forward");
  check(cfg.weights.res == 0.0 || (cfg.use_teacher && cfg.use_adapter),
        "train_step: residual loss weight needs both the teacher and the adapter");
  check(!cfg.shuffle_future_frames || cfg.use_teacher,
        "train_step: shuffled futures only affect the teacher forward");
  int B = batch.X.dim(0);

  auto [tau_v, tau_a] = sample_timesteps(rng);
  Tensor eps_v = Tensor::constant(batch.X.shape(), normal_vec(rng, batch.X.size()));
  Tensor eps_a = Tensor::constant(batch.A.shape(), normal_vec(rng, batch.A.size()));
  FlowSample sample = corrupt(batch.X, batch.A, tau_v, tau_a, eps_v, eps_a);
  auto [w_v, w_a] = schedule_weights(cfg.sched, tau_v, tau_a);

  std::vector<double> x1(static_cast<size_t>(B) * bc.frame_dim);
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < bc.frame_dim; ++j)
      x1[static_cast<size_t>(b) * bc.frame_dim + j] =
          batch.X.at((static_cast<int64_t>(b) * bc.frames) * bc.frame_dim + j);
  Tensor X1_clean = Tensor::constant({B, bc.frame_dim}, std::move(x1));

  Tape tape;
  JointMask m_s = build_student_mask(bc.layout());
  MoTOutputs student = mot_forward(tape, params, sample.X_corrupted, sample.A_corrupted,
                                   X1_clean, tau_v, tau_a, m_s);

  TrainStepResult res;
  res.outputs.v_base = student.v_act;
  res.diag.tau_v = tau_v;
  res.diag.tau_a = tau_a;
  res.diag.student_action_loss = mean_sq_diff(student.v_act, sample.v_target);

  if (cfg.use_teacher) {
    Tensor teacher_X = batch.X;
    if (cfg.shuffle_future_frames) {
      TrajectoryBatch shuffled = shuffle_future(batch, rng);
      teacher_X = shuffled.X;
      res.diag.teacher_saw_shuffled = true;
    }
    FlowSample teacher_sample = corrupt(teacher_X, batch.A, tau_v, tau_a, eps_v, eps_a);
    JointMask m_t = build_teacher_mask(bc.layout());
    MoTParams frozen = detached_view(params);
    MoTOutputs teacher = mot_forward(tape, frozen, teacher_sample.X_corrupted,
                                     sample.A_corrupted, X1_clean, tau_v, tau_a, m_t);
    res.outputs.v_teacher = teacher.v_act;
    res.outputs.r = foresight_residual(teacher.v_act, student.v_act);
    res.diag.teacher_ran = true;
    res.diag.teacher_action_loss = mean_sq_diff(teacher.v_act, sample.v_target);
    res.diag.max_r = max_abs(res.outputs.r);
  }

  if (cfg.use_adapter) {
    AdapterOut ao = adapter_apply(tape, adapter, student.v_act, tau_a);
    res.outputs.delta_hat = ao.delta_hat;
    res.outputs.v_final = ao.v_final;
    res.diag.max_delta = max_abs(ao.delta_hat);
  } else {
    res.outputs.delta_hat = Tensor::zeros(student.v_act.shape());
    res.outputs.v_final = student.v_act;
  }

  int TV = bc.frames * bc.video_tokens;
  Tensor u_target = Tensor::constant({B, TV, bc.slice_dim()}, sample.u_target.values());
  LossGraph lg = compute_losses(tape, student.u_video, u_target, res.outputs.v_final,
                                sample.v_target, res.outputs.delta_hat, res.outputs.r,
                                res.outputs.v_teacher, cfg.weights, w_v, w_a);
  res.losses = lg.values;

  bool finite = std::isfinite(lg.values.total) && std::isfinite(lg.values.video) &&
                std::isfinite(lg.values.gt) && std::isfinite(lg.values.res) &&
                std::isfinite(lg.values.teacher);
  if (!finite) {
    std::ostringstream os;
    os << "non-finite loss: video=" << lg.values.video << " gt=" << lg.values.gt
       << " res=" << lg.values.res << " teacher=" << lg.values.teacher
       << " total=" << lg.values.total << " tau_v=" << tau_v << " tau_a=" << tau_a;
    fail(os.str());
  }

  GradMap grads = backward(lg.total, tape);
  AdamW::StepInfo info = opt.step(trainable, grads);
  res.diag.grad_norm_preclip = info.grad_norm_preclip;
  res.diag.lr = info.lr;
  return res;
}

}  // namespace pfd
