#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "pfd/harness.hpp"

namespace {

pfd::ExperimentConfig load_or_default(const std::string& config_path) {
  if (config_path.empty()) return pfd::ExperimentConfig{};
  return pfd::load_config(config_path);
}

int meta_int(const pfd::Checkpoint& ckpt, const std::string& key) {
  return std::stoi(ckpt.meta.at(key));
}

int cmd_gen_data(const std::string& config_path, const std::string& out) {
  pfd::ExperimentConfig cfg = load_or_default(config_path);
  pfd::validate(cfg);
  pfd::Dataset data = pfd::make_dataset(cfg.world, cfg.dataset_size);
  pfd::save_dataset(out, data);
  std::cout << "wrote " << data.trajectories.size() << " trajectories (" << data.train_count
            << " train, " << data.eval_count() << " eval) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, const std::string& preset,
              const std::string& method_name, int64_t seed, int steps) {
  pfd::ExperimentConfig cfg = load_or_default(config_path);
  pfd::apply_preset(cfg, preset);
  if (seed >= 0) cfg.suite_seed = static_cast<uint64_t>(seed);
  if (steps > 0) cfg.steps = steps;
  pfd::validate(cfg);
  std::filesystem::create_directories(out);
  pfd::MethodConfig method = pfd::method_by_name(cfg, method_name);
  pfd::Dataset data = pfd::make_dataset(cfg.world, cfg.dataset_size);
  pfd::RunResult result = pfd::run_training(cfg, method, 0, data, out);
  std::cout << "config=" << result.config << " steps=" << result.steps
            << " eval_mse=" << result.eval_mse << " success_rate=" << result.success_rate
            << " teacher=" << (result.teacher_ever_ran ? "on" : "off")
            << " late_student_loss=" << result.mean_student_loss_late
            << " late_teacher_loss=" << result.mean_teacher_loss_late << "\n"
            << "artifacts in " << out << "\n";
  return 0;
}

int cmd_probe(const std::string& config_path, const std::string& out, const std::string& preset,
              int64_t seed, int steps) {
  pfd::ExperimentConfig cfg = load_or_default(config_path);
  pfd::apply_preset(cfg, preset);
  if (seed >= 0) cfg.suite_seed = static_cast<uint64_t>(seed);
  if (steps > 0) cfg.steps = steps;
  pfd::validate(cfg);
  std::filesystem::create_directories(out);
  std::vector<pfd::RunResult> runs = pfd::run_methods(cfg, pfd::probe_methods(cfg), out);
  pfd::SuiteReport report = pfd::emit_report(runs, out);
  std::cout << report.summary_text << "report written to " << out << "\n";
  return 0;
}

int cmd_bench_latency(const std::string& ckpt_path, int warmup, int trials) {
  pfd::Checkpoint ckpt = pfd::load_checkpoint(ckpt_path);
  pfd::BackboneConfig bc;
  bc.depth = meta_int(ckpt, "depth");
  bc.d_model = meta_int(ckpt, "d_model");
  bc.num_heads = meta_int(ckpt, "num_heads");
  bc.frames = meta_int(ckpt, "frames");
  bc.video_tokens = meta_int(ckpt, "video_tokens");
  bc.chunk_len = meta_int(ckpt, "chunk_len");
  bc.frame_dim = meta_int(ckpt, "frame_dim");
  bc.action_dim = meta_int(ckpt, "action_dim");
  bc.ff_mult = meta_int(ckpt, "ff_mult");
  pfd::AdapterConfig ac;
  ac.width = meta_int(ckpt, "adapter_width");
  ac.tau_dim = meta_int(ckpt, "adapter_tau_dim");
  ac.action_dim = bc.action_dim;

  pfd::Rng shape_rng("bench-shape", 0);
  pfd::MoTParams params = pfd::init_params(bc, shape_rng);
  pfd::AdapterParams adapter = pfd::init_adapter(ac, shape_rng);
  pfd::fill_from_checkpoint(params, ckpt);
  pfd::fill_from_checkpoint(adapter, ckpt);

  pfd::SamplerConfig sc;
  sc.num_steps = meta_int(ckpt, "sampler_steps");
  pfd::Rng input_rng("bench-input", 0);
  pfd::Tensor X1 = pfd::Tensor::constant(
      {1, bc.frame_dim}, pfd::normal_vec(input_rng, bc.frame_dim));
  pfd::LatencyReport report = pfd::measure_latency(params, adapter, X1, warmup, trials, sc);
  std::cout << pfd::format_report(report);
  return report.overhead_fraction < 0.10 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flow-matching action policy with privileged foresight distillation"};
  app.require_subcommand(1);

  std::string config_path, out_path, preset = "desk", method = "pfd-default";
  std::string ckpt_path;
  int64_t seed = -1;
  int steps = 0, warmup = 5, trials = 20;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a trajectory dataset file");
  gen->add_option("--config", config_path, "experiment config file");
  gen->add_option("--out", out_path, "output dataset path")->required();

  CLI::App* train = app.add_subcommand("train", "train one configuration and evaluate it");
  train->add_option("--config", config_path, "experiment config file");
  train->add_option("--out", out_path, "output directory")->required();
  train->add_option("--seed", seed, "suite seed override");
  train->add_option("--steps", steps, "step count override");
  train->add_option("--preset", preset, "desk or paper-ratio");
  train->add_option("--method", method, "probe row to train");

  CLI::App* probe = app.add_subcommand("probe", "run the full seven-row probe suite");
  probe->add_option("--config", config_path, "experiment config file");
  probe->add_option("--out", out_path, "output directory")->required();
  probe->add_option("--seed", seed, "suite seed override");
  probe->add_option("--steps", steps, "step count override");
  probe->add_option("--preset", preset, "desk or paper-ratio");

  CLI::App* bench = app.add_subcommand("bench-latency", "time inference with and without the adapter");
  bench->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  bench->add_option("--warmup", warmup, "discarded runs per arm");
  bench->add_option("--trials", trials, "timed runs per arm");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path);
    if (train->parsed()) return cmd_train(config_path, out_path, preset, method, seed, steps);
    if (probe->parsed()) return cmd_probe(config_path, out_path, preset, seed, steps);
    if (bench->parsed()) return cmd_bench_latency(ckpt_path, warmup, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
