#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"

namespace pfd {

/// Goal-reaching world: the goal is weakly cued in frame 1 (amplitude alpha)
/// and fully revealed from frame reveal_step on, so future frames carry
/// information the current frame only hints at.
struct WorldConfig {
  int frame_dim = 16;
  int frames = 4;
  int chunk_len = 8;
  int action_dim = 2;
  int goals = 4;
  double alpha = 0.25;
  int reveal_step = 3;
  double sigma = 0.05;
  uint64_t seed = 0;
};

void validate(const WorldConfig& cfg);

/// Orthonormal code per goal (standard basis vector g).
std::vector<double> goal_code(const WorldConfig& cfg, int goal);
/// Unit-circle target position, angle 2*pi*g/G.
std::vector<double> goal_position(const WorldConfig& cfg, int goal);

struct Trajectory {
  std::vector<double> frames;   // frames * frame_dim
  std::vector<double> actions;  // chunk_len * action_dim
  int goal = 0;
};

Trajectory generate_trajectory(const WorldConfig& cfg, Rng& rng);
Trajectory generate_trajectory(const WorldConfig& cfg, Rng& rng, int goal);

struct Dataset {
  WorldConfig cfg;
  std::vector<Trajectory> trajectories;
  int train_count = 0;

  int eval_count() const { return static_cast<int>(trajectories.size()) - train_count; }
};

/// Deterministic function of (cfg, n): goal of trajectory i is i mod G, the
/// first 90% of indices form the train split, per-trajectory noise streams
/// derive from cfg.seed.
Dataset make_dataset(const WorldConfig& cfg, int n);

struct TrajectoryBatch {
  Tensor X;  // (B, T, frame_dim)
  Tensor A;  // (B, H, action_dim)
  std::vector<int> goals;
};

/// indices select dataset trajectories; out-of-range indices are an error.
TrajectoryBatch batch_from(const Dataset& data, const std::vector<int>& indices);

/// Replaces every element's frames 2..T by those of a different element
/// (single-cycle derangement drawn from rng). Frame 1, actions, goals stay.
TrajectoryBatch shuffle_future(const TrajectoryBatch& batch, Rng& rng);

struct SuccessResult {
  bool success = false;
  double mse = 0.0;
};

/// Success iff the endpoint of the integrated chunk lies within radius rho of
/// the goal position; mse is against the ground-truth chunk.
SuccessResult success_metric(const std::vector<double>& A_hat,
                             const std::vector<double>& A_true,
                             const std::vector<double>& goal_pos, int chunk_len, int action_dim,
                             double rho);

/// Nearest-code decoder over one frame; returns the goal index.
int decode_goal(const WorldConfig& cfg, const double* frame);

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

}  // namespace pfd
