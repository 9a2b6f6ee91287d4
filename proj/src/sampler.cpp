#include "pfd/sampler.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

}  // namespace

void validate(const SamplerConfig& cfg) {
  check(cfg.num_steps >= 1, "sampler needs at least one step");
  check(cfg.guidance_scale == 1.0,
        "guidance is inactive at scale 1.0 and no other scale is implemented");
}

Tensor integrate_chunk(const VelocityField& field, Tensor A0, int num_steps) {
  check(num_steps >= 1, "sampler needs at least one step");
  double delta = 1.0 / num_steps;
  std::vector<double> a(A0.values());
  for (int s = 0; s < num_steps; ++s) {
    double tau_a = static_cast<double>(s) / num_steps;
    Tensor v = field(Tensor::constant(A0.shape(), a), tau_a);
    check(v.shape() == A0.shape(), "velocity field changed the chunk shape");
    for (size_t i = 0; i < a.size(); ++i) a[i] += delta * v.at(static_cast<int64_t>(i));
  }
  return Tensor::constant(A0.shape(), std::move(a));
}

Tensor denoise_chunk(const MoTParams& params, const AdapterParams& adapter,
                     const Tensor& X1_clean, const SamplerConfig& cfg, Rng& rng,
                     bool use_adapter) {
  validate(cfg);
  const BackboneConfig& bc = params.cfg;
  check(X1_clean.rank() == 2 && X1_clean.dim(1) == bc.frame_dim,
        "denoise_chunk: X1_clean must be (B, frame_dim)");
  int B = X1_clean.dim(0);

  MoTParams frozen = detached_view(params);
  AdapterParams frozen_adapter = detached_view(adapter);
  TokenLayout layout = bc.layout();
  layout.frames = 1;
  JointMask mask = build_student_mask(layout);
  Tensor X_in = Tensor::constant({B, 1, bc.frame_dim}, X1_clean.values());

  Tensor A0 = Tensor::constant({B, bc.chunk_len, bc.action_dim},
                               normal_vec(rng, static_cast<int64_t>(B) * bc.chunk_len *
                                                   bc.action_dim));
  VelocityField field = [&](const Tensor& A, double tau_a) {
    Tape tape;
    MoTOutputs out = mot_forward(tape, frozen, X_in, A, X1_clean, 1.0, tau_a, mask);
    if (!use_adapter) return out.v_act;
    return adapter_apply(tape, frozen_adapter, out.v_act, tau_a).v_final;
  };
  return integrate_chunk(field, A0, cfg.num_steps);
}

LatencyReport measure_latency(const MoTParams& params, const AdapterParams& adapter,
                              const Tensor& X1_clean, int warmup, int trials,
                              const SamplerConfig& cfg) {
  check(warmup >= 0 && trials >= 1 && trials > warmup,
        "latency protocol expects trials > warmup >= 0");
  LatencyReport report;
  report.warmup = warmup;
  report.trials = trials;

  auto run_arm = [&](bool use_adapter) {
    std::vector<double> times;
    times.reserve(static_cast<size_t>(trials));
    for (int i = 0; i < warmup + trials; ++i) {
      Rng rng("latency-trial", static_cast<uint64_t>(i) + cfg.seed);
      auto start = std::chrono::steady_clock::now();
      Tensor chunk = denoise_chunk(params, adapter, X1_clean, cfg, rng, use_adapter);
      auto stop = std::chrono::steady_clock::now();
      check(all_finite(chunk), "latency trial produced a non-finite chunk");
      if (i >= warmup)
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return times;
  };

  report.baseline_ms = run_arm(false);
  report.corrected_ms = run_arm(true);
  report.mean_baseline_ms =
      std::accumulate(report.baseline_ms.begin(), report.baseline_ms.end(), 0.0) / trials;
  report.mean_corrected_ms =
      std::accumulate(report.corrected_ms.begin(), report.corrected_ms.end(), 0.0) / trials;
  report.overhead_fraction =
      (report.mean_corrected_ms - report.mean_baseline_ms) / report.mean_baseline_ms;
  return report;
}

std::string format_report(const LatencyReport& report) {
  std::ostringstream os;
  os << "latency report: warmup=" << report.warmup << " trials=" << report.trials << "\n";
  for (size_t i = 0; i < report.baseline_ms.size(); ++i)
    os << "trial " << i << " baseline_ms=" << report.baseline_ms[i]
       << " corrected_ms=" << report.corrected_ms[i] << "\n";
  os << "mean_baseline_ms=" << report.mean_baseline_ms << "\n";
  os << "mean_corrected_ms=" << report.mean_corrected_ms << "\n";
  os << "overhead_fraction=" << report.overhead_fraction << "\n";
  return os.str();
}

}  // namespace pfd
