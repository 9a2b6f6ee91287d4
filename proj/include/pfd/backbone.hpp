#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pfd/rng.hpp"
#include "pfd/tensor.hpp"

namespace pfd {

struct TokenLayout {
  int frames = 4;        // T
  int video_tokens = 1;  // V per frame
  int chunk_len = 8;     // H action tokens
  int d_model = 64;

  int total_tokens() const { return frames * video_tokens + chunk_len; }
};

struct JointMask {
  enum class Kind { student, teacher };
  Kind kind;
  TokenLayout layout;
  BoolMatrix permit;
};

/// Action rows see frame-1 video plus all action tokens. Video rows are
/// frame-causal (frame t sees video tokens of frames <= t) plus all action
/// tokens, identically in both kinds, so the student/teacher difference is
/// exactly the action rows' future-video support and future frames cannot
/// reach the action output through intermediate video states.
JointMask build_student_mask(const TokenLayout& layout);
JointMask build_teacher_mask(const TokenLayout& layout);

struct BackboneConfig {
  int depth = 4;
  int d_model = 64;
  int num_heads = 2;
  int frames = 4;
  int video_tokens = 1;
  int chunk_len = 8;
  int frame_dim = 16;
  int action_dim = 2;
  int ff_mult = 2;

  int slice_dim() const;
  TokenLayout layout() const {
    return TokenLayout{frames, video_tokens, chunk_len, d_model};
  }
};

struct ExpertBlock {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_g, ln2_b;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
};

struct MoTParams {
  BackboneConfig cfg;
  Tensor video_embed_w, video_embed_b;
  Tensor action_embed_w, action_embed_b;
  Tensor clean_embed_w, clean_embed_b;
  Tensor pos_embed;  // (T*V + H) x d_model, action rows fixed at offset T*V
  std::vector<ExpertBlock> video_blocks, action_blocks;
  Tensor final_ln_video_g, final_ln_video_b, final_ln_action_g, final_ln_action_b;
  Tensor head_video_w, head_video_b;
  Tensor head_action_w, head_action_b;
};

MoTParams init_params(const BackboneConfig& cfg, Rng& rng);

/// Visits every parameter in a fixed canonical order.
void for_each_param(MoTParams& params,
                    const std::function<void(const std::string&, Tensor&)>& fn);
std::vector<std::pair<std::string, Tensor>> named_params(MoTParams& params);

struct TrainableSet {
  std::set<std::string> blocks;  // identifiers like "action.block3"

  bool contains_param(const std::string& param_name) const;
  bool empty() const { return blocks.empty(); }
};

/// Last K_a action blocks and last K_v video blocks; heads and embedders are
/// never included.
TrainableSet select_trainable(const MoTParams& params, int K_a, int K_v);

/// Flags exactly the set's parameters (plus nothing else) as grad-enabled and
/// returns them in canonical order.
std::vector<Tensor> apply_trainable(MoTParams& params, const TrainableSet& set);

/// Value copies with gradient tracking stripped, for teacher and inference
/// passes. Refresh after any parameter update.
MoTParams detached_view(const MoTParams& params);

struct MoTOutputs {
  Tensor u_video;  // (B, T_in*V, slice_dim)
  Tensor v_act;    // (B, H, action_dim)
};

/// X_corrupted: (B, T_in, frame_dim) with 1 <= T_in <= cfg.frames,
/// A_corrupted: (B, H, action_dim), X1_clean: (B, frame_dim). The mask must
/// be built for a layout with T = T_in.
MoTOutputs mot_forward(Tape& tape, MoTParams& params, const Tensor& X_corrupted,
                       const Tensor& A_corrupted, const Tensor& X1_clean, double tau_v,
                       double tau_a, const JointMask& mask);

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::map<std::string, std::string>& meta);

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
};

Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint values into an already shaped parameter struct.
void fill_from_checkpoint(MoTParams& params, const Checkpoint& ckpt);

}  // namespace pfd
