#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace pfd {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Boolean permission matrix, row = query, col = key. permit[r*cols+c] != 0
/// means query r may attend key c.
struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> permit;

  BoolMatrix() = default;
  BoolMatrix(int r, int c, uint8_t fill = 0) : rows(r), cols(c), permit(static_cast<size_t>(r) * c, fill) {}

  bool at(int r, int c) const { return permit[static_cast<size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool v) { permit[static_cast<size_t>(r) * cols + c] = v ? 1 : 0; }
  bool operator==(const BoolMatrix& o) const {
    return rows == o.rows && cols == o.cols && permit == o.permit;
  }
};

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool grad_enabled = false;
  int node_id = -1;  // index of the tape record that produced this tensor
  int64_t uid = 0;   // process-unique identity, survives across tapes
};
}  // namespace detail

/// Dense row-major 64-bit tensor. Copies share the underlying buffer;
/// values are immutable once the tensor has entered tape ops (the optimizer
/// mutates leaf parameters only between tapes, via raw_values()).
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// Grad-enabled leaf (a trainable parameter).
  static Tensor param(Shape shape, std::vector<double> values);
  static Tensor param_zeros(Shape shape);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[i]; }
  int64_t size() const { return static_cast<int64_t>(d_->values.size()); }
  bool grad_enabled() const { return d_->grad_enabled; }
  /// Freeze/unfreeze a leaf. Never call on a tensor produced by a tape op.
  void set_grad_enabled(bool enabled) { d_->grad_enabled = enabled; }
  int64_t uid() const { return d_->uid; }
  int node_id() const { return d_->node_id; }

  const std::vector<double>& values() const { return d_->values; }
  /// Mutable access to leaf values. Never call on a tensor that already
  /// participates in a live tape.
  std::vector<double>& raw_values() { return d_->values; }

  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<double>& grad() const { return d_->grad; }
  void clear_grad() { d_->grad.clear(); }

  double scalar_value() const;
  double at(int64_t flat_index) const { return d_->values[static_cast<size_t>(flat_index)]; }

  bool same_data(const Tensor& o) const { return d_ == o.d_; }

 private:
  friend class Tape;
  friend Tensor stop_gradient(const Tensor&);
  friend struct OpAccess;
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<detail::TensorData> d_;
};

/// Map from leaf tensor uid to its gradient (a constant Tensor).
using GradMap = std::unordered_map<int64_t, Tensor>;

/// Records every grad-tracked operation of one training step, in creation
/// order. Replay in reverse order is the backward pass. One tape per step;
/// discard after backward.
class Tape {
 public:
  struct Record {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    // Reads out.grad (and out.values where useful), accumulates into the
    // inputs' grads.
    std::function<void(const detail::TensorData& out)> backprop;
  };

  size_t num_records() const { return records_.size(); }
  const Record& record(size_t i) const { return records_[i]; }
  void clear() { records_.clear(); }

 private:
  friend struct OpAccess;
  friend GradMap backward(const Tensor& loss, Tape& tape);
  std::vector<Record> records_;
};

/// Runs reverse-mode accumulation from a scalar loss produced on this tape.
/// Returns gradients for every grad-enabled leaf that participated.
/// Call once per tape.
GradMap backward(const Tensor& loss, Tape& tape);

/// Identity on values, blocks all gradient flow.
Tensor stop_gradient(const Tensor& t);

// ---- differentiable primitives ------------------------------------------
// Unless noted, shapes must match exactly. Every primitive satisfies the
// central-finite-difference gradient contract checked in the test suite.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double c);

/// x: (..., d), bias: (d). Adds bias to every row.
Tensor add_rowvec(Tape& tape, const Tensor& x, const Tensor& bias);

/// x: (B, ...rest), table: (...rest). Adds the table to every batch element.
Tensor add_batched(Tape& tape, const Tensor& x, const Tensor& table);

/// x: (B, T, d), y: (B, L, d). Adds y into x[:, offset:offset+L, :].
Tensor add_slice(Tape& tape, const Tensor& x, const Tensor& y, int offset);

/// x: (..., k) interpreted as (numel/k, k); w: (k, n). Output (..., n).
Tensor matmul(Tape& tape, const Tensor& x, const Tensor& w);

Tensor silu(Tape& tape, const Tensor& x);

/// Row-wise normalization over the last dim, then per-column gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// scores: (..., Q, K); the mask applies to every trailing QxK slice.
/// Masked entries are exactly zero, each row sums to 1. A row with no
/// permitted key is a malformed mask and throws.
Tensor masked_softmax(Tape& tape, const Tensor& scores, const BoolMatrix& mask);

/// q: (B, Tq, d), k: (B, Tk, d), d % num_heads == 0. Output (B*num_heads,
/// Tq, Tk), scaled by 1/sqrt(d/num_heads).
Tensor attention_scores(Tape& tape, const Tensor& q, const Tensor& k, int num_heads);

/// probs: (B*num_heads, Tq, Tk), v: (B, Tk, d). Output (B, Tq, d).
Tensor attention_combine(Tape& tape, const Tensor& probs, const Tensor& v, int num_heads);

/// Same rank, all dims equal except `axis`.
Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, int axis);

/// Contiguous slab [start, start+len) along `axis`.
Tensor narrow(Tape& tape, const Tensor& x, int axis, int start, int len);

/// Same numel, new shape. Copies.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);

/// Scalar mean over elements of (a-b)^2.
Tensor mse(Tape& tape, const Tensor& a, const Tensor& b);

// ---- non-differentiable helpers ------------------------------------------

/// Deterministic timestep embedding: component k of dim/2 at frequency
/// 10000^(-2k/dim); sin block then cos block. dim must be even, >= 2.
Tensor sinusoidal_embed(double tau, int dim);

struct LinearInit {
  Tensor weight;  // (in_dim, out_dim)
  Tensor bias;    // (out_dim)
};

/// Grad-enabled parameter pair with weight and bias exactly 0.0.
LinearInit linear_zero_init(int in_dim, int out_dim);

double max_abs(const Tensor& t);
bool all_finite(const Tensor& t);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace pfd
