#include "pfd/world.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

void validate(const WorldConfig& cfg) {
  check(cfg.frame_dim >= 1 && cfg.frames >= 2 && cfg.chunk_len >= 1, "world dims must be positive");
  check(cfg.action_dim == 2, "goal positions live on the unit circle; action_dim must be 2");
  check(cfg.goals >= 2, "need at least 2 goals");
  check(cfg.goals <= cfg.frame_dim, "orthonormal goal codes need goals <= frame_dim");
  check(cfg.reveal_step >= 2 && cfg.reveal_step <= cfg.frames,
        "reveal_step must lie in [2, frames]");
  check(cfg.alpha >= 0.0 && cfg.sigma >= 0.0, "alpha and sigma must be non-negative");
}

std::vector<double> goal_code(const WorldConfig& cfg, int goal) {
  check(goal >= 0 && goal < cfg.goals, "goal index out of range");
  std::vector<double> code(static_cast<size_t>(cfg.frame_dim), 0.0);
  code[static_cast<size_t>(goal)] = 1.0;
  return code;
}

std::vector<double> goal_position(const WorldConfig& cfg, int goal) {
  check(goal >= 0 && goal < cfg.goals, "goal index out of range");
  double angle = 2.0 * M_PI * goal / cfg.goals;
  return {std::cos(angle), std::sin(angle)};
}

Trajectory generate_trajectory(const WorldConfig& cfg, Rng& rng) {
  return generate_trajectory(cfg, rng, rng.uniform_int(cfg.goals));
}

Trajectory generate_trajectory(const WorldConfig& cfg, Rng& rng, int goal) {
  validate(cfg);
  check(goal >= 0 && goal < cfg.goals, "goal index out of range");
  Trajectory traj;
  traj.goal = goal;
  traj.frames.assign(static_cast<size_t>(cfg.frames) * cfg.frame_dim, 0.0);
  for (int t = 0; t < cfg.frames; ++t) {
    double amplitude = 0.0;
    if (t == 0) amplitude = cfg.alpha;
    if (t + 1 >= cfg.reveal_step) amplitude = 1.0;
    double* frame = traj.frames.data() + static_cast<size_t>(t) * cfg.frame_dim;
    frame[goal] += amplitude;
    for (int j = 0; j < cfg.frame_dim; ++j) frame[j] += cfg.sigma * rng.normal();
  }
  std::vector<double> pos = goal_position(cfg, goal);
  traj.actions.resize(static_cast<size_t>(cfg.chunk_len) * cfg.action_dim);
  for (int h = 0; h < cfg.chunk_len; ++h)
    for (int a = 0; a < cfg.action_dim; ++a)
      traj.actions[static_cast<size_t>(h) * cfg.action_dim + a] =
          pos[static_cast<size_t>(a)] / cfg.chunk_len;
  return traj;
}

Dataset make_dataset(const WorldConfig& cfg, int n) {
  validate(cfg);
  check(n >= 2, "dataset needs at least 2 trajectories");
  Dataset data;
  data.cfg = cfg;
  data.trajectories.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng traj_rng(mix_seed(cfg.seed, static_cast<uint64_t>(i)));
    data.trajectories.push_back(generate_trajectory(cfg, traj_rng, i % cfg.goals));
  }
  data.train_count = n * 9 / 10;
  if (data.train_count < 1) data.train_count = 1;
  return data;
}

TrajectoryBatch batch_from(const Dataset& data, const std::vector<int>& indices) {
  check(!indices.empty(), "empty batch");
  const WorldConfig& cfg = data.cfg;
  int B = static_cast<int>(indices.size());
  std::vector<double> xs;
  xs.reserve(static_cast<size_t>(B) * cfg.frames * cfg.frame_dim);
  std::vector<double> as;
  as.reserve(static_cast<size_t>(B) * cfg.chunk_len * cfg.action_dim);
  TrajectoryBatch batch;
  for (int idx : indices) {
    check(idx >= 0 && idx < static_cast<int>(data.trajectories.size()),
          "batch index out of range");
    const Trajectory& t = data.trajectories[static_cast<size_t>(idx)];
    xs.insert(xs.end(), t.frames.begin(), t.frames.end());
    as.insert(as.end(), t.actions.begin(), t.actions.end());
    batch.goals.push_back(t.goal);
  }
  batch.X = Tensor::constant({B, cfg.frames, cfg.frame_dim}, std::move(xs));
  batch.A = Tensor::constant({B, cfg.chunk_len, cfg.action_dim}, std::move(as));
  return batch;
}

TrajectoryBatch shuffle_future(const TrajectoryBatch& batch, Rng& rng) {
  int B = batch.X.dim(0);
  check(B >= 2, "shuffle_future needs at least 2 elements; a single trajectory has no unrelated future");
  int T = batch.X.dim(1), d = batch.X.dim(2);
  // Sattolo's algorithm: a uniform single cycle, hence no fixed points.
  std::vector<int> perm(static_cast<size_t>(B));
  for (int i = 0; i < B; ++i) perm[static_cast<size_t>(i)] = i;
  for (int i = B - 1; i >= 1; --i) {
    int j = rng.uniform_int(i);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  std::vector<double> xs(batch.X.values());
  const auto& src = batch.X.values();
  for (int b = 0; b < B; ++b) {
    int from = perm[static_cast<size_t>(b)];
    for (int t = 1; t < T; ++t) {
      double* dst = xs.data() + (static_cast<size_t>(b) * T + t) * d;
      const double* s = src.data() + (static_cast<size_t>(from) * T + t) * d;
      std::copy(s, s + d, dst);
    }
  }
  TrajectoryBatch out;
  out.X = Tensor::constant(batch.X.shape(), std::move(xs));
  out.A = batch.A;
  out.goals = batch.goals;
  return out;
}

SuccessResult success_metric(const std::vector<double>& A_hat, const std::vector<double>& A_true,
                             const std::vector<double>& goal_pos, int chunk_len, int action_dim,
                             double rho) {
  size_t n = static_cast<size_t>(chunk_len) * action_dim;
  check(A_hat.size() == n && A_true.size() == n, "success_metric: chunk size mismatch");
  check(goal_pos.size() == static_cast<size_t>(action_dim), "success_metric: bad goal position");
  std::vector<double> endpoint(static_cast<size_t>(action_dim), 0.0);
  double sq = 0.0;
  for (int h = 0; h < chunk_len; ++h)
    for (int a = 0; a < action_dim; ++a) {
      size_t i = static_cast<size_t>(h) * action_dim + a;
      endpoint[static_cast<size_t>(a)] += A_hat[i];
      double diff = A_hat[i] - A_true[i];
      sq += diff * diff;
    }
  double dist2 = 0.0;
  for (int a = 0; a < action_dim; ++a) {
    double diff = endpoint[static_cast<size_t>(a)] - goal_pos[static_cast<size_t>(a)];
    dist2 += diff * diff;
  }
  SuccessResult res;
  res.success = std::sqrt(dist2) <= rho;
  res.mse = sq / static_cast<double>(n);
  return res;
}

int decode_goal(const WorldConfig& cfg, const double* frame) {
  int best = 0;
  double best_score = frame[0];
  for (int g = 1; g < cfg.goals; ++g)
    if (frame[g] > best_score) {
      best_score = frame[g];
      best = g;
    }
  return best;
}

// ---- dataset file IO -------------------------------------------------------

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open dataset file for writing: " + path);
  const WorldConfig& cfg = data.cfg;
  out << "PFDDATA v1\n";
  out << std::setprecision(17);
  out << "frame_dim " << cfg.frame_dim << "\n";
  out << "frames " << cfg.frames << "\n";
  out << "chunk_len " << cfg.chunk_len << "\n";
  out << "action_dim " << cfg.action_dim << "\n";
  out << "goals " << cfg.goals << "\n";
  out << "alpha " << cfg.alpha << "\n";
  out << "reveal_step " << cfg.reveal_step << "\n";
  out << "sigma " << cfg.sigma << "\n";
  out << "seed " << cfg.seed << "\n";
  out << "count " << data.trajectories.size() << "\n";
  out << "train_count " << data.train_count << "\n";
  out << "DATA\n";
  for (const Trajectory& t : data.trajectories) {
    out.write(reinterpret_cast<const char*>(t.frames.data()),
              static_cast<std::streamsize>(t.frames.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(t.actions.data()),
              static_cast<std::streamsize>(t.actions.size() * sizeof(double)));
    int64_t goal = t.goal;
    out.write(reinterpret_cast<const char*>(&goal), sizeof(goal));
  }
  check(out.good(), "dataset write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open dataset file: " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)) && line == "PFDDATA v1",
        "bad dataset magic in " + path);
  Dataset data;
  WorldConfig& cfg = data.cfg;
  int64_t count = -1;
  while (std::getline(in, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frame_dim") ls >> cfg.frame_dim;
    else if (key == "frames") ls >> cfg.frames;
    else if (key == "chunk_len") ls >> cfg.chunk_len;
    else if (key == "action_dim") ls >> cfg.action_dim;
    else if (key == "goals") ls >> cfg.goals;
    else if (key == "alpha") ls >> cfg.alpha;
    else if (key == "reveal_step") ls >> cfg.reveal_step;
    else if (key == "sigma") ls >> cfg.sigma;
    else if (key == "seed") ls >> cfg.seed;
    else if (key == "count") ls >> count;
    else if (key == "train_count") ls >> data.train_count;
    else fail("unknown dataset header key: " + key);
    check(!ls.fail(), "malformed dataset header line: " + line);
  }
  check(line == "DATA", "dataset header missing DATA marker");
  check(count >= 0, "dataset header missing count");
  validate(cfg);
  data.trajectories.resize(static_cast<size_t>(count));
  for (Trajectory& t : data.trajectories) {
    t.frames.resize(static_cast<size_t>(cfg.frames) * cfg.frame_dim);
    t.actions.resize(static_cast<size_t>(cfg.chunk_len) * cfg.action_dim);
    in.read(reinterpret_cast<char*>(t.frames.data()),
            static_cast<std::streamsize>(t.frames.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(t.actions.data()),
            static_cast<std::streamsize>(t.actions.size() * sizeof(double)));
    int64_t goal = 0;
    in.read(reinterpret_cast<char*>(&goal), sizeof(goal));
    check(in.good(), "dataset data truncated in " + path);
    t.goal = static_cast<int>(goal);
  }
  return data;
}

}  // namespace pfd
