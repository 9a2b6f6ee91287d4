#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pfd/pfd.hpp"

namespace pfd {

struct SamplerConfig {
  int num_steps = 10;
  double guidance_scale = 1.0;  // only the inactive scale is supported
  uint64_t seed = 0;
};

void validate(const SamplerConfig& cfg);

/// Maps the current chunk estimate and tau_a to an action velocity.
using VelocityField = std::function<Tensor(const Tensor& A, double tau_a)>;

/// Explicit Euler over a uniform grid: A <- A + (1/num_steps) * field(A, s/num_steps).
Tensor integrate_chunk(const VelocityField& field, Tensor A0, int num_steps);

/// Current-only inference: A starts as Gaussian noise, the forward sees one
/// clean frame under the student mask at tau_v = 1, the adapter corrects each
/// velocity. X1_clean: (B, frame_dim); returns (B, chunk_len, action_dim).
Tensor denoise_chunk(const MoTParams& params, const AdapterParams& adapter,
                     const Tensor& X1_clean, const SamplerConfig& cfg, Rng& rng,
                     bool use_adapter = true);

struct LatencyReport {
  std::vector<double> baseline_ms;
  std::vector<double> corrected_ms;
  int warmup = 5;
  int trials = 20;
  double mean_baseline_ms = 0.0;
  double mean_corrected_ms = 0.0;
  double overhead_fraction = 0.0;
};

/// Times adapter-bypassed and adapter-corrected chunk inference over `trials`
/// runs each, after `warmup` discarded runs per arm. Both arms replay the
/// same seeds, so they do identical work apart from the adapter.
LatencyReport measure_latency(const MoTParams& params, const AdapterParams& adapter,
                              const Tensor& X1_clean, int warmup, int trials,
                              const SamplerConfig& cfg);

std::string format_report(const LatencyReport& report);

}  // namespace pfd
