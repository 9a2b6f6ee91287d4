#include "pfd/backbone.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

void check_layout(const TokenLayout& layout) {
  check(layout.frames >= 1 && layout.video_tokens >= 1 && layout.chunk_len >= 1 &&
            layout.d_model >= 1,
        "token layout fields must be positive");
}

}  // namespace

JointMask build_student_mask(const TokenLayout& layout) {
  check_layout(layout);
  int T = layout.frames, V = layout.video_tokens, H = layout.chunk_len;
  int TV = T * V, N = TV + H;
  JointMask mask{JointMask::Kind::student, layout, BoolMatrix(N, N, 0)};
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < V; ++i) {
      int r = t * V + i;
      for (int c = 0; c < (t + 1) * V; ++c) mask.permit.set(r, c, true);
      for (int c = TV; c < N; ++c) mask.permit.set(r, c, true);
    }
  for (int r = TV; r < N; ++r) {
    for (int c = 0; c < V; ++c) mask.permit.set(r, c, true);
    for (int c = TV; c < N; ++c) mask.permit.set(r, c, true);
  }
  return mask;
}

JointMask build_teacher_mask(const TokenLayout& layout) {
  JointMask mask = build_student_mask(layout);
  mask.kind = JointMask::Kind::teacher;
  int TV = layout.frames * layout.video_tokens, N = TV + layout.chunk_len;
  for (int r = TV; r < N; ++r)
    for (int c = 0; c < TV; ++c) mask.permit.set(r, c, true);
  return mask;
}

int BackboneConfig::slice_dim() const {
  if (video_tokens <= 0 || frame_dim % video_tokens != 0)
    fail("frame_dim " + std::to_string(frame_dim) + " must split evenly into " +
         std::to_string(video_tokens) + " video tokens");
  return frame_dim / video_tokens;
}

namespace {

Tensor init_linear_w(Rng& rng, int in_dim, int out_dim) {
  return Tensor::param({in_dim, out_dim},
                       normal_vec(rng, static_cast<int64_t>(in_dim) * out_dim,
                                  1.0 / std::sqrt(static_cast<double>(in_dim))));
}

Tensor zeros_b(int dim) { return Tensor::param_zeros({dim}); }

Tensor ones_g(int dim) {
  return Tensor::param({dim}, std::vector<double>(static_cast<size_t>(dim), 1.0));
}

ExpertBlock init_block(const BackboneConfig& cfg, Rng& rng) {
  int d = cfg.d_model, ff = cfg.d_model * cfg.ff_mult;
  ExpertBlock b;
  b.ln1_g = ones_g(d);
  b.ln1_b = zeros_b(d);
  b.wq = init_linear_w(rng, d, d);
  b.bq = zeros_b(d);
  b.wk = init_linear_w(rng, d, d);
  b.bk = zeros_b(d);
  b.wv = init_linear_w(rng, d, d);
  b.bv = zeros_b(d);
  b.wo = init_linear_w(rng, d, d);
  b.bo = zeros_b(d);
  b.ln2_g = ones_g(d);
  b.ln2_b = zeros_b(d);
  b.ff_w1 = init_linear_w(rng, d, ff);
  b.ff_b1 = zeros_b(ff);
  b.ff_w2 = init_linear_w(rng, ff, d);
  b.ff_b2 = zeros_b(d);
  return b;
}

}  // namespace

MoTParams init_params(const BackboneConfig& cfg, Rng& rng) {
  check(cfg.depth >= 1, "depth must be at least 1");
  check(cfg.d_model % cfg.num_heads == 0, "d_model must divide by num_heads");
  int sd = cfg.slice_dim();
  MoTParams p;
  p.cfg = cfg;
  p.video_embed_w = init_linear_w(rng, sd, cfg.d_model);
  p.video_embed_b = zeros_b(cfg.d_model);
  p.action_embed_w = init_linear_w(rng, cfg.action_dim, cfg.d_model);
  p.action_embed_b = zeros_b(cfg.d_model);
  // The clean-frame condition is the only low-amplitude input (cue alpha sits
  // well below the unit-scale corrupted stream), so give its embedder a wider
  // init to keep the cue visible in the residual stream from step 0.
  p.clean_embed_w = Tensor::param(
      {sd, cfg.d_model}, normal_vec(rng, static_cast<int64_t>(sd) * cfg.d_model,
                                    4.0 / std::sqrt(static_cast<double>(sd))));
  p.clean_embed_b = zeros_b(cfg.d_model);
  int total = cfg.frames * cfg.video_tokens + cfg.chunk_len;
  p.pos_embed = Tensor::param(
      {total, cfg.d_model}, normal_vec(rng, static_cast<int64_t>(total) * cfg.d_model, 0.3));
  for (int i = 0; i < cfg.depth; ++i) p.video_blocks.push_back(init_block(cfg, rng));
  for (int i = 0; i < cfg.depth; ++i) p.action_blocks.push_back(init_block(cfg, rng));
  p.final_ln_video_g = ones_g(cfg.d_model);
  p.final_ln_video_b = zeros_b(cfg.d_model);
  p.final_ln_action_g = ones_g(cfg.d_model);
  p.final_ln_action_b = zeros_b(cfg.d_model);
  p.head_video_w = init_linear_w(rng, cfg.d_model, sd);
  p.head_video_b = zeros_b(sd);
  p.head_action_w = init_linear_w(rng, cfg.d_model, cfg.action_dim);
  p.head_action_b = zeros_b(cfg.action_dim);
  return p;
}

namespace {

void visit_block(const std::string& prefix, ExpertBlock& b,
                 const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".ln1_g", b.ln1_g);
  fn(prefix + ".ln1_b", b.ln1_b);
  fn(prefix + ".wq", b.wq);
  fn(prefix + ".bq", b.bq);
  fn(prefix + ".wk", b.wk);
  fn(prefix + ".bk", b.bk);
  fn(prefix + ".wv", b.wv);
  fn(prefix + ".bv", b.bv);
  fn(prefix + ".wo", b.wo);
  fn(prefix + ".bo", b.bo);
  fn(prefix + ".ln2_g", b.ln2_g);
  fn(prefix + ".ln2_b", b.ln2_b);
  fn(prefix + ".ff_w1", b.ff_w1);
  fn(prefix + ".ff_b1", b.ff_b1);
  fn(prefix + ".ff_w2", b.ff_w2);
  fn(prefix + ".ff_b2", b.ff_b2);
}

}  // namespace

void for_each_param(MoTParams& p,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("shared.video_embed_w", p.video_embed_w);
  fn("shared.video_embed_b", p.video_embed_b);
  fn("shared.action_embed_w", p.action_embed_w);
  fn("shared.action_embed_b", p.action_embed_b);
  fn("shared.clean_embed_w", p.clean_embed_w);
  fn("shared.clean_embed_b", p.clean_embed_b);
  fn("shared.pos_embed", p.pos_embed);
  for (size_t i = 0; i < p.video_blocks.size(); ++i)
    visit_block("video.block" + std::to_string(i), p.video_blocks[i], fn);
  for (size_t i = 0; i < p.action_blocks.size(); ++i)
    visit_block("action.block" + std::to_string(i), p.action_blocks[i], fn);
  fn("shared.final_ln_video_g", p.final_ln_video_g);
  fn("shared.final_ln_video_b", p.final_ln_video_b);
  fn("shared.final_ln_action_g", p.final_ln_action_g);
  fn("shared.final_ln_action_b", p.final_ln_action_b);
  fn("shared.head_video_w", p.head_video_w);
  fn("shared.head_video_b", p.head_video_b);
  fn("shared.head_action_w", p.head_action_w);
  fn("shared.head_action_b", p.head_action_b);
}

std::vector<std::pair<std::string, Tensor>> named_params(MoTParams& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  for_each_param(params, [&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

bool TrainableSet::contains_param(const std::string& param_name) const {
  auto dot = param_name.rfind('.');
  if (dot == std::string::npos) return false;
  return blocks.count(param_name.substr(0, dot)) > 0;
}

TrainableSet select_trainable(const MoTParams& params, int K_a, int K_v) {
  int depth = params.cfg.depth;
  check(K_a >= 0 && K_a <= depth && K_v >= 0 && K_v <= depth,
        "trainable block counts must lie in [0, depth]");
  TrainableSet set;
  for (int i = depth - K_v; i < depth; ++i) set.blocks.insert("video.block" + std::to_string(i));
  for (int i = depth - K_a; i < depth; ++i) set.blocks.insert("action.block" + std::to_string(i));
  return set;
}

std::vector<Tensor> apply_trainable(MoTParams& params, const TrainableSet& set) {
  std::vector<Tensor> trainable;
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    bool on = set.contains_param(name);
    t.set_grad_enabled(on);
    if (on) trainable.push_back(t);
  });
  return trainable;
}

MoTParams detached_view(const MoTParams& params) {
  MoTParams view = params;
  for_each_param(view, [](const std::string&, Tensor& t) { t = stop_gradient(t); });
  return view;
}

namespace {

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(tape, matmul(tape, x, w), b);
}

Tensor block_body(Tape& tape, ExpertBlock& blk, const Tensor& h, const Tensor& attn_out) {
  Tensor h1 = add(tape, h, linear(tape, attn_out, blk.wo, blk.bo));
  Tensor n2 = layer_norm(tape, h1, blk.ln2_g, blk.ln2_b);
  Tensor ff = linear(tape, silu(tape, linear(tape, n2, blk.ff_w1, blk.ff_b1)), blk.ff_w2,
                     blk.ff_b2);
  return add(tape, h1, ff);
}

}  // namespace

MoTOutputs mot_forward(Tape& tape, MoTParams& params, const Tensor& X_corrupted,
                       const Tensor& A_corrupted, const Tensor& X1_clean, double tau_v,
                       double tau_a, const JointMask& mask) {
  const BackboneConfig& cfg = params.cfg;
  int sd = cfg.slice_dim();
  check(X_corrupted.rank() == 3 && X_corrupted.dim(2) == cfg.frame_dim,
        "mot_forward: X_corrupted must be (B, T_in, frame_dim)");
  int B = X_corrupted.dim(0), T_in = X_corrupted.dim(1);
  check(T_in >= 1 && T_in <= cfg.frames, "mot_forward: frame count out of range");
  check(A_corrupted.rank() == 3 && A_corrupted.dim(0) == B &&
            A_corrupted.dim(1) == cfg.chunk_len && A_corrupted.dim(2) == cfg.action_dim,
        "mot_forward: A_corrupted must be (B, H, action_dim)");
  check(X1_clean.rank() == 2 && X1_clean.dim(0) == B && X1_clean.dim(1) == cfg.frame_dim,
        "mot_forward: X1_clean must be (B, frame_dim)");
  check(tau_v >= 0.0 && tau_v <= 1.0 && tau_a >= 0.0 && tau_a <= 1.0,
        "mot_forward: timesteps must lie in [0,1]");
  check(mask.layout.frames == T_in && mask.layout.video_tokens == cfg.video_tokens &&
            mask.layout.chunk_len == cfg.chunk_len,
        "mot_forward: mask layout does not match the token counts");

  int TV = T_in * cfg.video_tokens;
  int H = cfg.chunk_len;

  Tensor x_slices = reshape(tape, X_corrupted, {B, TV, sd});
  Tensor hv = linear(tape, x_slices, params.video_embed_w, params.video_embed_b);
  Tensor clean_slices = reshape(tape, X1_clean, {B, cfg.video_tokens, sd});
  Tensor clean_emb = linear(tape, clean_slices, params.clean_embed_w, params.clean_embed_b);
  hv = add_slice(tape, hv, clean_emb, 0);
  hv = add_rowvec(tape, hv, sinusoidal_embed(tau_v, cfg.d_model));
  Tensor pos_video = narrow(tape, params.pos_embed, 0, 0, TV);
  hv = add_batched(tape, hv, pos_video);

  Tensor ha = linear(tape, A_corrupted, params.action_embed_w, params.action_embed_b);
  ha = add_rowvec(tape, ha, sinusoidal_embed(tau_a, cfg.d_model));
  Tensor pos_action =
      narrow(tape, params.pos_embed, 0, cfg.frames * cfg.video_tokens, H);
  ha = add_batched(tape, ha, pos_action);

  for (int l = 0; l < cfg.depth; ++l) {
    ExpertBlock& vb = params.video_blocks[static_cast<size_t>(l)];
    ExpertBlock& ab = params.action_blocks[static_cast<size_t>(l)];
    Tensor nv = layer_norm(tape, hv, vb.ln1_g, vb.ln1_b);
    Tensor na = layer_norm(tape, ha, ab.ln1_g, ab.ln1_b);
    Tensor q = concat(tape, linear(tape, nv, vb.wq, vb.bq), linear(tape, na, ab.wq, ab.bq), 1);
    Tensor k = concat(tape, linear(tape, nv, vb.wk, vb.bk), linear(tape, na, ab.wk, ab.bk), 1);
    Tensor v = concat(tape, linear(tape, nv, vb.wv, vb.bv), linear(tape, na, ab.wv, ab.bv), 1);
    Tensor probs = masked_softmax(tape, attention_scores(tape, q, k, cfg.num_heads), mask.permit);
    Tensor attn = attention_combine(tape, probs, v, cfg.num_heads);
    hv = block_body(tape, vb, hv, narrow(tape, attn, 1, 0, TV));
    ha = block_body(tape, ab, ha, narrow(tape, attn, 1, TV, H));
  }

  MoTOutputs out;
  out.u_video = linear(tape, layer_norm(tape, hv, params.final_ln_video_g, params.final_ln_video_b),
                       params.head_video_w, params.head_video_b);
  out.v_act = linear(tape, layer_norm(tape, ha, params.final_ln_action_g, params.final_ln_action_b),
                     params.head_action_w, params.head_action_b);
  return out;
}

// ---- checkpoint IO -------------------------------------------------------------

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open checkpoint for writing: " + path);
  std::ostringstream header;
  header << "PFDCKPT v1\n";
  for (const auto& [k, v] : meta) {
    check(k.find_first_of(" \n") == std::string::npos && v.find('\n') == std::string::npos,
          "checkpoint meta keys/values must be single-line");
    header << "meta " << k << " " << v << "\n";
  }
  int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    header << "param " << name << " " << t.rank();
    for (int i = 0; i < t.rank(); ++i) header << " " << t.dim(i);
    header << " " << offset << "\n";
    offset += t.size() * static_cast<int64_t>(sizeof(double));
  }
  header << "DATA\n";
  out << header.str();
  for (const auto& [name, t] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  check(out.good(), "checkpoint write failed: " + path);
}

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  fail("checkpoint has no tensor named " + name);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint: " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)) && line == "PFDCKPT v1",
        "bad checkpoint magic in " + path);
  Checkpoint ckpt;
  struct Entry {
    std::string name;
    Shape shape;
    int64_t offset;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (tag == "param") {
      Entry e;
      int rank = 0;
      ls >> e.name >> rank;
      check(rank >= 0 && rank <= 8, "bad rank in checkpoint header");
      e.shape.resize(static_cast<size_t>(rank));
      for (int i = 0; i < rank; ++i) ls >> e.shape[static_cast<size_t>(i)];
      ls >> e.offset;
      check(!ls.fail(), "malformed param line: " + line);
      entries.push_back(std::move(e));
    } else {
      fail("unknown checkpoint header line: " + line);
    }
  }
  check(line == "DATA", "checkpoint header missing DATA marker");
  std::streampos data_start = in.tellg();
  for (const Entry& e : entries) {
    int64_t n = shape_numel(e.shape);
    std::vector<double> values(static_cast<size_t>(n));
    in.seekg(data_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    check(in.good(), "checkpoint data truncated at " + e.name);
    ckpt.tensors.emplace_back(e.name, Tensor::constant(e.shape, std::move(values)));
  }
  return ckpt;
}

void fill_from_checkpoint(MoTParams& params, const Checkpoint& ckpt) {
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    const Tensor& src = ckpt.find(name);
    check(src.shape() == t.shape(), "checkpoint shape mismatch for " + name);
    t.raw_values() = src.values();
  });
}

}  // namespace pfd
