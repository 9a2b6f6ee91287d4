#pragma once

#include <string>
#include <vector>

#include "pfd/pfd.hpp"
#include "pfd/sampler.hpp"

namespace pfd {

struct ExperimentConfig {
  WorldConfig world;
  BackboneConfig backbone;
  AdapterConfig adapter;
  AdamConfig optim;
  SamplerConfig sampler;
  LossWeights weights;
  int steps = 2000;
  int batch_size = 32;
  int dataset_size = 1000;
  int k_a = 2;
  int k_v = 2;
  double eval_rho = 0.2;
  uint64_t suite_seed = 1;
  int seed_count = 5;
};

void validate(const ExperimentConfig& cfg);

/// Flat "key = value" text grouped into [section] blocks, one section per
/// sub-config. Unknown sections or keys are errors.
ExperimentConfig load_config(const std::string& path);
std::string default_config_text();

/// desk: the built-in defaults. paper-ratio: adapter width 512, peak lr 6e-5,
/// K_a = K_v = 40% of depth.
void apply_preset(ExperimentConfig& cfg, const std::string& preset);

/// One row of the probe table: what trains, what the teacher sees, and how
/// much of the backbone unfreezes.
struct MethodConfig {
  std::string name;
  LossWeights weights;
  bool use_teacher = false;
  bool use_adapter = false;
  bool shuffle_future_frames = false;
  int k_a = 0;
  int k_v = 0;
  int adapter_width = 64;
};

/// The seven probe rows, in report order.
std::vector<MethodConfig> probe_methods(const ExperimentConfig& cfg);
MethodConfig method_by_name(const ExperimentConfig& cfg, const std::string& name);

struct RunResult {
  std::string config;
  int seed_index = 0;
  int steps = 0;
  double eval_mse = 0.0;
  double success_rate = 0.0;
  bool teacher_ever_ran = false;
  bool teacher_saw_shuffled = false;
  // Per-step audit aggregates over the tail of training (step index >= 100).
  double min_max_r_late = 0.0;
  double max_max_r_late = 0.0;
  double mean_student_loss_late = 0.0;
  double mean_teacher_loss_late = 0.0;
};

/// Trains one (method, seed) pair on a shared dataset and evaluates on the
/// held-out split with the sampler. Rng streams derive from
/// (suite seed, method name, seed index). When out_dir is non-empty, writes
/// <out_dir>/<method>-seed<i>.log (one record per step) and a checkpoint.
RunResult run_training(const ExperimentConfig& cfg, const MethodConfig& method, int seed_index,
                       const Dataset& data, const std::string& out_dir);

/// Runs every method over every seed index under one shared dataset.
std::vector<RunResult> run_methods(const ExperimentConfig& cfg,
                                   const std::vector<MethodConfig>& methods,
                                   const std::string& out_dir);

struct ConfigSummary {
  std::string config;
  int runs = 0;
  double mean_mse = 0.0, sd_mse = 0.0;
  double mean_success = 0.0, sd_success = 0.0;
};

ConfigSummary summarize(const std::vector<RunResult>& runs, const std::string& config);
double pooled_sd(double sd_a, double sd_b);

struct SuiteReport {
  std::vector<RunResult> runs;
  std::vector<ConfigSummary> summaries;
  std::string csv;
  std::string summary_text;
  // Probe orderings, evaluated when the involved configs are present.
  bool pfd_beats_baseline = false;
  bool shuffled_not_better_than_baseline = false;
  bool pure_finetune_not_better_than_pfd = false;
  // True when every pfd-default run keeps max|r| > 0 at every logged step in
  // the late window, i.e. the teacher mask stays behaviorally distinct.
  bool teacher_informative = false;
};

/// Builds the CSV and the verdict summary; writes results.csv and summary.txt
/// under out_dir when it is non-empty.
SuiteReport emit_report(const std::vector<RunResult>& runs, const std::string& out_dir);

}  // namespace pfd
