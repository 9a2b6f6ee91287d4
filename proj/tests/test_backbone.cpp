#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fd_check.hpp"
#include "pfd/backbone.hpp"
#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"

using namespace pfd;

namespace {

BackboneConfig small_config() {
  BackboneConfig cfg;
  cfg.depth = 2;
  cfg.d_model = 16;
  cfg.num_heads = 2;
  cfg.frames = 3;
  cfg.video_tokens = 2;
  cfg.chunk_len = 2;
  cfg.frame_dim = 8;
  cfg.action_dim = 2;
  cfg.ff_mult = 2;
  return cfg;
}

struct ForwardInputs {
  Tensor X, A, X1;
};

ForwardInputs random_inputs(const BackboneConfig& cfg, int B, Rng& rng) {
  ForwardInputs in;
  in.X = Tensor::constant({B, cfg.frames, cfg.frame_dim},
                          normal_vec(rng, static_cast<int64_t>(B) * cfg.frames * cfg.frame_dim));
  in.A = Tensor::constant({B, cfg.chunk_len, cfg.action_dim},
                          normal_vec(rng, static_cast<int64_t>(B) * cfg.chunk_len * cfg.action_dim));
  in.X1 = Tensor::constant({B, cfg.frame_dim},
                           normal_vec(rng, static_cast<int64_t>(B) * cfg.frame_dim));
  return in;
}

MoTOutputs run(MoTParams& params, const ForwardInputs& in, const JointMask& mask,
               double tau_v = 0.3, double tau_a = 0.7) {
  Tape tape;
  return mot_forward(tape, params, in.X, in.A, in.X1, tau_v, tau_a, mask);
}

}  // namespace

TEST_CASE("student mask at T=3 V=2 H=2 permits frame-1 video and actions only") {
  TokenLayout layout{3, 2, 2, 16};
  JointMask m = build_student_mask(layout);
  REQUIRE(m.permit.rows == 8);
  REQUIRE(m.permit.cols == 8);
  std::set<int> permitted{0, 1, 6, 7};
  for (int r = 6; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(m.permit.at(r, c) == (permitted.count(c) > 0));
}

TEST_CASE("teacher mask at T=3 V=2 H=2 permits everything from action rows") {
  TokenLayout layout{3, 2, 2, 16};
  JointMask m = build_teacher_mask(layout);
  for (int r = 6; r < 8; ++r)
    for (int c = 0; c < 8; ++c) CHECK(m.permit.at(r, c));
}

TEST_CASE("every action row permits itself in both masks") {
  TokenLayout layout{4, 3, 5, 16};
  JointMask s = build_student_mask(layout);
  JointMask t = build_teacher_mask(layout);
  for (int r = 12; r < 17; ++r) {
    CHECK(s.permit.at(r, r));
    CHECK(t.permit.at(r, r));
  }
}

TEST_CASE("video rows identical across kinds; difference is action rows x future video") {
  TokenLayout layout{4, 2, 3, 16};
  JointMask s = build_student_mask(layout);
  JointMask t = build_teacher_mask(layout);
  int TV = layout.frames * layout.video_tokens;
  int N = layout.total_tokens();
  for (int r = 0; r < TV; ++r)
    for (int c = 0; c < N; ++c) CHECK(s.permit.at(r, c) == t.permit.at(r, c));
  for (int r = TV; r < N; ++r)
    for (int c = 0; c < N; ++c) {
      bool future_video = c >= layout.video_tokens && c < TV;
      if (future_video) {
        CHECK(t.permit.at(r, c));
        CHECK_FALSE(s.permit.at(r, c));
      } else {
        CHECK(s.permit.at(r, c) == t.permit.at(r, c));
      }
    }
}

TEST_CASE("masks coincide when only one frame exists") {
  TokenLayout layout{1, 2, 2, 16};
  CHECK(build_student_mask(layout).permit == build_teacher_mask(layout).permit);
}

TEST_CASE("mot_forward is deterministic and shaped") {
  BackboneConfig cfg = small_config();
  Rng rng("backbone-det", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 2, rng);
  JointMask mask = build_student_mask(cfg.layout());
  MoTOutputs a = run(params, in, mask);
  MoTOutputs b = run(params, in, mask);
  CHECK(a.u_video.shape() == Shape{2, cfg.frames * cfg.video_tokens, cfg.slice_dim()});
  CHECK(a.v_act.shape() == Shape{2, cfg.chunk_len, cfg.action_dim});
  CHECK(bitwise_equal(a.u_video, b.u_video));
  CHECK(bitwise_equal(a.v_act, b.v_act));
  CHECK(all_finite(a.u_video));
  CHECK(all_finite(a.v_act));
}

TEST_CASE("equal masks give bitwise-equal outputs; T=1 student equals teacher") {
  BackboneConfig cfg = small_config();
  cfg.frames = 1;
  Rng rng("backbone-t1", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 2, rng);
  MoTOutputs s = run(params, in, build_student_mask(cfg.layout()));
  MoTOutputs t = run(params, in, build_teacher_mask(cfg.layout()));
  CHECK(bitwise_equal(s.v_act, t.v_act));
  CHECK(bitwise_equal(s.u_video, t.u_video));
}

TEST_CASE("teacher and student action outputs differ when futures exist") {
  BackboneConfig cfg = small_config();
  cfg.frames = 4;
  Rng rng("backbone-differ", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 2, rng);
  MoTOutputs s = run(params, in, build_student_mask(cfg.layout()));
  MoTOutputs t = run(params, in, build_teacher_mask(cfg.layout()));
  std::vector<double> diff(s.v_act.values());
  for (size_t i = 0; i < diff.size(); ++i) diff[i] -= t.v_act.values()[i];
  double m = 0;
  for (double d : diff) m = std::max(m, std::fabs(d));
  CHECK(m > 0.0);
}

TEST_CASE("student action output is bitwise blind to future frames") {
  BackboneConfig cfg;
  cfg.depth = 4;
  cfg.d_model = 32;
  cfg.num_heads = 2;
  cfg.frames = 4;
  cfg.video_tokens = 2;
  cfg.chunk_len = 4;
  cfg.frame_dim = 8;
  cfg.action_dim = 2;
  Rng rng("backbone-blind", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 2, rng);
  JointMask mask = build_student_mask(cfg.layout());
  MoTOutputs base = run(params, in, mask);

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xv(in.X.values());
    int B = in.X.dim(0);
    for (int k = 0; k < 5; ++k) {
      int b = rng.uniform_int(B);
      int t = 1 + rng.uniform_int(cfg.frames - 1);
      int j = rng.uniform_int(cfg.frame_dim);
      xv[(static_cast<size_t>(b) * cfg.frames + t) * cfg.frame_dim + j] += rng.uniform(-3.0, 3.0);
    }
    ForwardInputs poked{Tensor::constant(in.X.shape(), std::move(xv)), in.A, in.X1};
    MoTOutputs out = run(params, poked, mask);
    CHECK(bitwise_equal(out.v_act, base.v_act));
  }
}

TEST_CASE("teacher action output reacts to future frames") {
  BackboneConfig cfg = small_config();
  cfg.frames = 4;
  Rng rng("backbone-react", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 1, rng);
  JointMask mask = build_teacher_mask(cfg.layout());
  MoTOutputs base = run(params, in, mask);

  bool any_change = false;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> xv(in.X.values());
    int t = 1 + rng.uniform_int(cfg.frames - 1);
    int j = rng.uniform_int(cfg.frame_dim);
    xv[static_cast<size_t>(t) * cfg.frame_dim + j] += rng.uniform(0.5, 2.0);
    ForwardInputs poked{Tensor::constant(in.X.shape(), std::move(xv)), in.A, in.X1};
    MoTOutputs out = run(params, poked, mask);
    if (!bitwise_equal(out.v_act, base.v_act)) any_change = true;
  }
  CHECK(any_change);
}

TEST_CASE("select_trainable picks exactly the last blocks") {
  BackboneConfig cfg = small_config();
  cfg.depth = 4;
  Rng rng("backbone-select", 0);
  MoTParams params = init_params(cfg, rng);

  CHECK(select_trainable(params, 0, 0).empty());
  CHECK(select_trainable(params, 4, 4).blocks.size() == 8);

  TrainableSet set = select_trainable(params, 2, 1);
  CHECK(set.blocks == std::set<std::string>{"action.block2", "action.block3", "video.block3"});
  CHECK(set.contains_param("action.block2.wq"));
  CHECK_FALSE(set.contains_param("action.block1.wq"));
  CHECK_FALSE(set.contains_param("shared.head_action_w"));
  CHECK_FALSE(set.contains_param("shared.pos_embed"));

  CHECK_THROWS(select_trainable(params, 5, 0));
  CHECK_THROWS(select_trainable(params, 0, -1));

  TrainableSet chosen = select_trainable(params, 3, 2);
  std::set<std::string> all_blocks;
  for (int i = 0; i < 4; ++i) {
    all_blocks.insert("video.block" + std::to_string(i));
    all_blocks.insert("action.block" + std::to_string(i));
  }
  for (const std::string& b : chosen.blocks) CHECK(all_blocks.count(b) == 1);
  CHECK(chosen.blocks.size() == 5);
}

TEST_CASE("paper-scale ratio: 12 of 30 blocks is 40 percent") {
  BackboneConfig cfg = small_config();
  cfg.depth = 30;
  Rng rng("backbone-ratio", 0);
  MoTParams params = init_params(cfg, rng);
  TrainableSet set = select_trainable(params, 12, 12);
  int action_count = 0;
  for (const std::string& b : set.blocks)
    if (b.rfind("action.", 0) == 0) ++action_count;
  CHECK(action_count == 12);
  CHECK(set.blocks.size() == 24);
  CHECK(action_count * 10 == cfg.depth * 4);
}

TEST_CASE("apply_trainable flags only the selected parameters") {
  BackboneConfig cfg = small_config();
  Rng rng("backbone-apply", 0);
  MoTParams params = init_params(cfg, rng);
  TrainableSet set = select_trainable(params, 1, 0);
  std::vector<Tensor> trainable = apply_trainable(params, set);
  CHECK(trainable.size() == 16);
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    CHECK(t.grad_enabled() == set.contains_param(name));
  });
  std::vector<Tensor> none = apply_trainable(params, TrainableSet{});
  CHECK(none.empty());
  for_each_param(params, [&](const std::string&, Tensor& t) { CHECK_FALSE(t.grad_enabled()); });
}

TEST_CASE("checkpoint round trip is bit exact") {
  BackboneConfig cfg = small_config();
  Rng rng("backbone-ckpt", 0);
  MoTParams params = init_params(cfg, rng);
  std::map<std::string, std::string> meta{{"seed", "17"}, {"note", "round trip"}};
  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, named_params(params), meta);

  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.meta == meta);
  auto namedp = named_params(params);
  REQUIRE(ckpt.tensors.size() == namedp.size());
  for (size_t i = 0; i < namedp.size(); ++i) {
    CHECK(ckpt.tensors[i].first == namedp[i].first);
    CHECK(ckpt.tensors[i].second.shape() == namedp[i].second.shape());
    CHECK(bitwise_equal(ckpt.tensors[i].second, namedp[i].second));
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint fill restores forward outputs bitwise") {
  BackboneConfig cfg = small_config();
  Rng rng_a("backbone-fill-a", 0);
  Rng rng_b("backbone-fill-b", 0);
  MoTParams saved = init_params(cfg, rng_a);
  MoTParams other = init_params(cfg, rng_b);
  const std::string path = "ckpt_fill.bin";
  save_checkpoint(path, named_params(saved), {});
  fill_from_checkpoint(other, load_checkpoint(path));
  std::remove(path.c_str());

  Rng rng_in("backbone-fill-in", 0);
  ForwardInputs in = random_inputs(cfg, 2, rng_in);
  JointMask mask = build_teacher_mask(cfg.layout());
  MoTOutputs a = run(saved, in, mask);
  MoTOutputs b = run(other, in, mask);
  CHECK(bitwise_equal(a.u_video, b.u_video));
  CHECK(bitwise_equal(a.v_act, b.v_act));
}

TEST_CASE("backbone gradients match finite differences") {
  BackboneConfig cfg;
  cfg.depth = 1;
  cfg.d_model = 4;
  cfg.num_heads = 2;
  cfg.frames = 2;
  cfg.video_tokens = 1;
  cfg.chunk_len = 1;
  cfg.frame_dim = 4;
  cfg.action_dim = 2;
  cfg.ff_mult = 2;
  Rng rng("backbone-fd", 0);
  MoTParams params = init_params(cfg, rng);
  ForwardInputs in = random_inputs(cfg, 1, rng);
  JointMask mask = build_teacher_mask(cfg.layout());

  Tensor wu = pfd_test::random_const(rng, {1, cfg.frames * cfg.video_tokens, cfg.slice_dim()});
  Tensor wv = pfd_test::random_const(rng, {1, cfg.chunk_len, cfg.action_dim});
  auto build = [&](Tape& tape) {
    MoTOutputs out = mot_forward(tape, params, in.X, in.A, in.X1, 0.4, 0.6, mask);
    return add(tape, pfd_test::weighted_sum(tape, out.u_video, wu),
               pfd_test::weighted_sum(tape, out.v_act, wv));
  };
  std::vector<Tensor> leaves;
  for_each_param(params, [&](const std::string&, Tensor& t) { leaves.push_back(t); });
  CHECK(pfd_test::fd_max_rel_error(build, leaves) < 1e-6);
}
