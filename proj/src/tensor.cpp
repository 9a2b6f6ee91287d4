#include "pfd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

int64_t next_uid() {
  static int64_t counter = 0;
  return ++counter;
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

int64_t outer_count(const Shape& s, int axis) {
  int64_t n = 1;
  for (int i = 0; i < axis; ++i) n *= s[i];
  return n;
}

int64_t inner_count(const Shape& s, int axis) {
  int64_t n = 1;
  for (size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d < 0) fail("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

struct OpAccess {
  static std::shared_ptr<detail::TensorData> make(Shape shape, std::vector<double> values,
                                                  bool grad_enabled) {
    check(shape_numel(shape) == static_cast<int64_t>(values.size()),
          "tensor value count does not match shape " + shape_str(shape));
    auto d = std::make_shared<detail::TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->grad_enabled = grad_enabled;
    d->uid = next_uid();
    return d;
  }

  static Tensor wrap(std::shared_ptr<detail::TensorData> d) { return Tensor(std::move(d)); }
  static detail::TensorData* data(const Tensor& t) { return t.d_.get(); }
  static std::vector<Tape::Record>& records(Tape& tape) { return tape.records_; }
};

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return OpAccess::wrap(OpAccess::make(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), value);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  return OpAccess::wrap(OpAccess::make(std::move(shape), std::move(values), true));
}

Tensor Tensor::param_zeros(Shape shape) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return param(std::move(shape), std::move(v));
}

double Tensor::scalar_value() const {
  check(size() == 1, "scalar_value on tensor of shape " + shape_str(shape()));
  return d_->values[0];
}

Tensor stop_gradient(const Tensor& t) {
  auto d = std::make_shared<detail::TensorData>();
  d->shape = t.shape();
  d->values = t.values();
  d->grad_enabled = false;
  d->uid = next_uid();
  return OpAccess::wrap(std::move(d));
}

// ---- tape machinery ----------------------------------------------------------

namespace {

using Out = detail::TensorData;
using Backprop = std::function<void(const Out&)>;

bool any_grad(std::initializer_list<const Tensor*> ins) {
  for (const Tensor* t : ins)
    if (t->grad_enabled()) return true;
  return false;
}

std::vector<double>& grad_buf(detail::TensorData* d) {
  if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
  return d->grad;
}

/// Builds the output tensor; when any input tracks gradients, records the op
/// so backward can replay it. Untracked ops leave no trace on the tape.
Tensor emit(Tape& tape, const char* op, std::initializer_list<const Tensor*> ins, Shape out_shape,
            std::vector<double> out_values, Backprop backprop) {
  bool tracked = any_grad(ins);
  auto out = OpAccess::make(std::move(out_shape), std::move(out_values), tracked);
  Tensor out_t = OpAccess::wrap(out);
  if (tracked) {
    out->node_id = static_cast<int>(OpAccess::records(tape).size());
    Tape::Record rec;
    rec.op = op;
    rec.inputs.reserve(ins.size());
    for (const Tensor* t : ins) rec.inputs.push_back(*t);
    rec.output = out_t;
    rec.backprop = std::move(backprop);
    OpAccess::records(tape).push_back(std::move(rec));
  }
  return out_t;
}

}  // namespace

GradMap backward(const Tensor& loss, Tape& tape) {
  check(loss.defined() && loss.size() == 1, "backward needs a scalar loss");
  check(loss.grad_enabled(), "backward on a loss with no gradient path");
  auto& records = OpAccess::records(tape);
  check(!records.empty() && loss.node_id() >= 0 &&
            loss.node_id() < static_cast<int>(records.size()) &&
            records[static_cast<size_t>(loss.node_id())].output.same_data(loss),
        "loss was not produced on this tape");

  for (auto& rec : records) {
    OpAccess::data(rec.output)->grad.clear();
    for (auto& in : rec.inputs) OpAccess::data(in)->grad.clear();
  }
  grad_buf(OpAccess::data(loss))[0] = 1.0;

  for (size_t i = records.size(); i-- > 0;) {
    auto& rec = records[i];
    const detail::TensorData* out = OpAccess::data(rec.output);
    if (out->grad.empty()) continue;
    rec.backprop(*out);
  }

  GradMap grads;
  for (auto& rec : records) {
    for (auto& in : rec.inputs) {
      detail::TensorData* d = OpAccess::data(in);
      if (d->node_id == -1 && d->grad_enabled && !d->grad.empty() && !grads.count(d->uid))
        grads.emplace(d->uid, Tensor::constant(d->shape, d->grad));
    }
  }

  for (auto& rec : records) {
    OpAccess::data(rec.output)->grad.clear();
    for (auto& in : rec.inputs) OpAccess::data(in)->grad.clear();
  }
  return grads;
}

// ---- primitives ---------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Out* ad = OpAccess::data(a);
  Out* bd = OpAccess::data(b);
  return emit(tape, "add", {&a, &b}, a.shape(), std::move(out), [ad, bd](const Out& o) {
    const auto& g = o.grad;
    if (ad->grad_enabled) {
      auto& ga = grad_buf(ad);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bd->grad_enabled) {
      auto& gb = grad_buf(bd);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Out* ad = OpAccess::data(a);
  Out* bd = OpAccess::data(b);
  return emit(tape, "sub", {&a, &b}, a.shape(), std::move(out), [ad, bd](const Out& o) {
    const auto& g = o.grad;
    if (ad->grad_enabled) {
      auto& ga = grad_buf(ad);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bd->grad_enabled) {
      auto& gb = grad_buf(bd);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Out* ad = OpAccess::data(a);
  Out* bd = OpAccess::data(b);
  return emit(tape, "mul", {&a, &b}, a.shape(), std::move(out), [ad, bd](const Out& o) {
    const auto& g = o.grad;
    if (ad->grad_enabled) {
      auto& ga = grad_buf(ad);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd->values[i];
    }
    if (bd->grad_enabled) {
      auto& gb = grad_buf(bd);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad->values[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  Out* ad = OpAccess::data(a);
  return emit(tape, "scale", {&a}, a.shape(), std::move(out), [ad, c](const Out& o) {
    const auto& g = o.grad;
    auto& ga = grad_buf(ad);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Tensor add_rowvec(Tape& tape, const Tensor& x, const Tensor& bias) {
  check(bias.rank() == 1, "add_rowvec: bias must be rank 1");
  check(x.rank() >= 1 && x.dim(x.rank() - 1) == bias.dim(0),
        "add_rowvec: last dim of x " + shape_str(x.shape()) + " must match bias " +
            shape_str(bias.shape()));
  int64_t d = bias.dim(0);
  int64_t rows = x.size() / d;
  std::vector<double> out(x.values());
  const auto& bv = bias.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j)
      out[static_cast<size_t>(r * d + j)] += bv[static_cast<size_t>(j)];
  Out* xd = OpAccess::data(x);
  Out* bd = OpAccess::data(bias);
  return emit(tape, "add_rowvec", {&x, &bias}, x.shape(), std::move(out),
              [xd, bd, rows, d](const Out& o) {
                const auto& g = o.grad;
                if (xd->grad_enabled) {
                  auto& gx = grad_buf(xd);
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (bd->grad_enabled) {
                  auto& gb = grad_buf(bd);
                  for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j)
                      gb[static_cast<size_t>(j)] += g[static_cast<size_t>(r * d + j)];
                }
              });
}

Tensor add_batched(Tape& tape, const Tensor& x, const Tensor& table) {
  check(x.rank() == table.rank() + 1, "add_batched: x must have one extra leading dim");
  for (int i = 0; i < table.rank(); ++i)
    check(x.dim(i + 1) == table.dim(i), "add_batched: trailing dims of x " + shape_str(x.shape()) +
                                            " must match table " + shape_str(table.shape()));
  int64_t batch = x.dim(0);
  int64_t rest = table.size();
  std::vector<double> out(x.values());
  const auto& tv = table.values();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t r = 0; r < rest; ++r)
      out[static_cast<size_t>(b * rest + r)] += tv[static_cast<size_t>(r)];
  Out* xd = OpAccess::data(x);
  Out* td = OpAccess::data(table);
  return emit(tape, "add_batched", {&x, &table}, x.shape(), std::move(out),
              [xd, td, batch, rest](const Out& o) {
                const auto& g = o.grad;
                if (xd->grad_enabled) {
                  auto& gx = grad_buf(xd);
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (td->grad_enabled) {
                  auto& gt = grad_buf(td);
                  for (int64_t b = 0; b < batch; ++b)
                    for (int64_t r = 0; r < rest; ++r)
                      gt[static_cast<size_t>(r)] += g[static_cast<size_t>(b * rest + r)];
                }
              });
}

Tensor add_slice(Tape& tape, const Tensor& x, const Tensor& y, int offset) {
  check(x.rank() == 3 && y.rank() == 3, "add_slice: expects rank-3 tensors");
  check(x.dim(0) == y.dim(0) && x.dim(2) == y.dim(2),
        "add_slice: batch and feature dims must match");
  check(offset >= 0 && offset + y.dim(1) <= x.dim(1), "add_slice: slice out of range");
  int64_t B = x.dim(0), T = x.dim(1), L = y.dim(1), d = x.dim(2);
  std::vector<double> out(x.values());
  const auto& yv = y.values();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t l = 0; l < L; ++l) {
      double* dst = out.data() + ((b * T + offset + l) * d);
      const double* src = yv.data() + ((b * L + l) * d);
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  Out* xd = OpAccess::data(x);
  Out* yd = OpAccess::data(y);
  return emit(tape, "add_slice", {&x, &y}, x.shape(), std::move(out),
              [xd, yd, B, T, L, d, offset](const Out& o) {
                const auto& g = o.grad;
                if (xd->grad_enabled) {
                  auto& gx = grad_buf(xd);
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                }
                if (yd->grad_enabled) {
                  auto& gy = grad_buf(yd);
                  for (int64_t b = 0; b < B; ++b)
                    for (int64_t l = 0; l < L; ++l) {
                      const double* src = g.data() + ((b * T + offset + l) * d);
                      double* dst = gy.data() + ((b * L + l) * d);
                      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                }
              });
}

namespace {

/// out(m,n) += x(m,k) @ w(k,n), row major, out must be zeroed or accumulable.
void mm_ikj(const double* x, const double* w, double* out, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* xr = x + i * k;
    double* orow = out + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      double xv = xr[kk];
      if (xv == 0.0) continue;
      const double* wr = w + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += xv * wr[j];
    }
  }
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& x, const Tensor& w) {
  check(w.rank() == 2, "matmul: weight must be rank 2");
  check(x.rank() >= 1 && x.dim(x.rank() - 1) == w.dim(0),
        "matmul: inner dims disagree, x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  int64_t k = w.dim(0), n = w.dim(1);
  int64_t m = x.size() / k;
  Shape out_shape = x.shape();
  out_shape.back() = static_cast<int>(n);
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  mm_ikj(x.values().data(), w.values().data(), out.data(), m, k, n);
  Out* xd = OpAccess::data(x);
  Out* wd = OpAccess::data(w);
  return emit(tape, "matmul", {&x, &w}, std::move(out_shape), std::move(out),
              [xd, wd, m, k, n](const Out& o) {
                const auto& g = o.grad;
                if (xd->grad_enabled) {
                  std::vector<double> wt(static_cast<size_t>(k * n));
                  const auto& wv = wd->values;
                  for (int64_t kk = 0; kk < k; ++kk)
                    for (int64_t j = 0; j < n; ++j)
                      wt[static_cast<size_t>(j * k + kk)] = wv[static_cast<size_t>(kk * n + j)];
                  auto& gx = grad_buf(xd);
                  mm_ikj(g.data(), wt.data(), gx.data(), m, n, k);
                }
                if (wd->grad_enabled) {
                  auto& gw = grad_buf(wd);
                  const auto& xv = xd->values;
                  for (int64_t i = 0; i < m; ++i) {
                    const double* gr = g.data() + i * n;
                    const double* xr = xv.data() + i * k;
                    for (int64_t kk = 0; kk < k; ++kk) {
                      double xvv = xr[kk];
                      if (xvv == 0.0) continue;
                      double* gwr = gw.data() + kk * n;
                      for (int64_t j = 0; j < n; ++j) gwr[j] += xvv * gr[j];
                    }
                  }
                }
              });
}

Tensor silu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.values());
  for (double& v : out) {
    double s = 1.0 / (1.0 + std::exp(-v));
    v = v * s;
  }
  Out* xd = OpAccess::data(x);
  return emit(tape, "silu", {&x}, x.shape(), std::move(out), [xd](const Out& o) {
    const auto& g = o.grad;
    auto& gx = grad_buf(xd);
    const auto& xv = xd->values;
    for (size_t i = 0; i < g.size(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-xv[i]));
      gx[i] += g[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
  });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check(gain.rank() == 1 && bias.rank() == 1, "layer_norm: gain and bias must be rank 1");
  int64_t d = gain.dim(0);
  check(bias.dim(0) == d, "layer_norm: gain and bias sizes differ");
  check(x.rank() >= 1 && x.dim(x.rank() - 1) == d,
        "layer_norm: last dim of x must match gain size");
  int64_t rows = x.size() / d;
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  std::vector<double> out(xv.size());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double* orow = out.data() + r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j)
      orow[j] = gv[static_cast<size_t>(j)] * ((xr[j] - mu) * inv) + bv[static_cast<size_t>(j)];
  }
  Out* xd = OpAccess::data(x);
  Out* gd = OpAccess::data(gain);
  Out* bd = OpAccess::data(bias);
  return emit(tape, "layer_norm", {&x, &gain, &bias}, x.shape(), std::move(out),
              [xd, gd, bd, rows, d, eps](const Out& o) {
                const auto& g = o.grad;
                const auto& xv = xd->values;
                const auto& gv = gd->values;
                std::vector<double> xhat(static_cast<size_t>(d));
                for (int64_t r = 0; r < rows; ++r) {
                  const double* xr = xv.data() + r * d;
                  const double* gr = g.data() + r * d;
                  double mu = 0.0;
                  for (int64_t j = 0; j < d; ++j) mu += xr[j];
                  mu /= static_cast<double>(d);
                  double var = 0.0;
                  for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                  var /= static_cast<double>(d);
                  double inv = 1.0 / std::sqrt(var + eps);
                  for (int64_t j = 0; j < d; ++j)
                    xhat[static_cast<size_t>(j)] = (xr[j] - mu) * inv;
                  if (gd->grad_enabled) {
                    auto& gg = grad_buf(gd);
                    for (int64_t j = 0; j < d; ++j)
                      gg[static_cast<size_t>(j)] += gr[j] * xhat[static_cast<size_t>(j)];
                  }
                  if (bd->grad_enabled) {
                    auto& gb = grad_buf(bd);
                    for (int64_t j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += gr[j];
                  }
                  if (xd->grad_enabled) {
                    auto& gx = grad_buf(xd);
                    double mean_gy = 0.0, mean_gy_xhat = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                      double gy = gr[j] * gv[static_cast<size_t>(j)];
                      mean_gy += gy;
                      mean_gy_xhat += gy * xhat[static_cast<size_t>(j)];
                    }
                    mean_gy /= static_cast<double>(d);
                    mean_gy_xhat /= static_cast<double>(d);
                    double* gxr = gx.data() + r * d;
                    for (int64_t j = 0; j < d; ++j) {
                      double gy = gr[j] * gv[static_cast<size_t>(j)];
                      gxr[j] += (gy - mean_gy - xhat[static_cast<size_t>(j)] * mean_gy_xhat) * inv;
                    }
                  }
                }
              });
}

Tensor masked_softmax(Tape& tape, const Tensor& scores, const BoolMatrix& mask) {
  check(scores.rank() >= 2, "masked_softmax: scores must be at least rank 2");
  int64_t Q = scores.dim(scores.rank() - 2);
  int64_t K = scores.dim(scores.rank() - 1);
  check(mask.rows == Q && mask.cols == K,
        "masked_softmax: mask " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
            " does not fit scores " + shape_str(scores.shape()));
  for (int r = 0; r < mask.rows; ++r) {
    bool any = false;
    for (int c = 0; c < mask.cols; ++c)
      if (mask.at(r, c)) {
        any = true;
        break;
      }
    if (!any) fail("masked_softmax: row " + std::to_string(r) + " permits no key");
  }
  int64_t slices = scores.size() / (Q * K);
  const auto& sv = scores.values();
  std::vector<double> out(sv.size(), 0.0);
  for (int64_t s = 0; s < slices; ++s)
    for (int64_t r = 0; r < Q; ++r) {
      const double* row = sv.data() + (s * Q + r) * K;
      double* orow = out.data() + (s * Q + r) * K;
      double mx = -1e300;
      for (int64_t c = 0; c < K; ++c)
        if (mask.at(static_cast<int>(r), static_cast<int>(c)) && row[c] > mx) mx = row[c];
      double z = 0.0;
      for (int64_t c = 0; c < K; ++c)
        if (mask.at(static_cast<int>(r), static_cast<int>(c))) {
          orow[c] = std::exp(row[c] - mx);
          z += orow[c];
        }
      for (int64_t c = 0; c < K; ++c)
        if (mask.at(static_cast<int>(r), static_cast<int>(c))) orow[c] /= z;
    }
  Out* sd = OpAccess::data(scores);
  return emit(tape, "masked_softmax", {&scores}, scores.shape(), std::move(out),
              [sd, slices, Q, K](const Out& o) {
                const auto& g = o.grad;
                const auto& p = o.values;
                auto& gs = grad_buf(sd);
                for (int64_t s = 0; s < slices; ++s)
                  for (int64_t r = 0; r < Q; ++r) {
                    const double* pr = p.data() + (s * Q + r) * K;
                    const double* gr = g.data() + (s * Q + r) * K;
                    double* gsr = gs.data() + (s * Q + r) * K;
                    double dot = 0.0;
                    for (int64_t c = 0; c < K; ++c) dot += pr[c] * gr[c];
                    for (int64_t c = 0; c < K; ++c) gsr[c] += pr[c] * (gr[c] - dot);
                  }
              });
}

Tensor attention_scores(Tape& tape, const Tensor& q, const Tensor& k, int num_heads) {
  check(q.rank() == 3 && k.rank() == 3, "attention_scores: q and k must be rank 3");
  check(q.dim(0) == k.dim(0) && q.dim(2) == k.dim(2),
        "attention_scores: batch or feature dims disagree");
  check(num_heads >= 1 && q.dim(2) % num_heads == 0,
        "attention_scores: feature dim must divide by head count");
  int64_t B = q.dim(0), Tq = q.dim(1), Tk = k.dim(1), d = q.dim(2);
  int64_t H = num_heads, dh = d / H;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> out(static_cast<size_t>(B * H * Tq * Tk), 0.0);
  const auto& qv = q.values();
  const auto& kv = k.values();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t i = 0; i < Tq; ++i) {
        const double* qr = qv.data() + (b * Tq + i) * d + h * dh;
        double* orow = out.data() + ((b * H + h) * Tq + i) * Tk;
        for (int64_t j = 0; j < Tk; ++j) {
          const double* kr = kv.data() + (b * Tk + j) * d + h * dh;
          double dot = 0.0;
          for (int64_t t = 0; t < dh; ++t) dot += qr[t] * kr[t];
          orow[j] = dot * inv_sqrt;
        }
      }
  Out* qd = OpAccess::data(q);
  Out* kd = OpAccess::data(k);
  return emit(tape, "attention_scores", {&q, &k},
              {static_cast<int>(B * H), static_cast<int>(Tq), static_cast<int>(Tk)},
              std::move(out), [qd, kd, B, Tq, Tk, d, H, dh, inv_sqrt](const Out& o) {
                const auto& g = o.grad;
                const auto& qv = qd->values;
                const auto& kv = kd->values;
                double* gq = qd->grad_enabled ? grad_buf(qd).data() : nullptr;
                double* gk = kd->grad_enabled ? grad_buf(kd).data() : nullptr;
                for (int64_t b = 0; b < B; ++b)
                  for (int64_t h = 0; h < H; ++h)
                    for (int64_t i = 0; i < Tq; ++i) {
                      const double* gr = g.data() + ((b * H + h) * Tq + i) * Tk;
                      const double* qr = qv.data() + (b * Tq + i) * d + h * dh;
                      for (int64_t j = 0; j < Tk; ++j) {
                        double gv = gr[j] * inv_sqrt;
                        if (gv == 0.0) continue;
                        const double* kr = kv.data() + (b * Tk + j) * d + h * dh;
                        if (gq) {
                          double* gqr = gq + (b * Tq + i) * d + h * dh;
                          for (int64_t t = 0; t < dh; ++t) gqr[t] += gv * kr[t];
                        }
                        if (gk) {
                          double* gkr = gk + (b * Tk + j) * d + h * dh;
                          for (int64_t t = 0; t < dh; ++t) gkr[t] += gv * qr[t];
                        }
                      }
                    }
              });
}

Tensor attention_combine(Tape& tape, const Tensor& probs, const Tensor& v, int num_heads) {
  check(probs.rank() == 3 && v.rank() == 3, "attention_combine: probs and v must be rank 3");
  check(num_heads >= 1 && v.dim(2) % num_heads == 0,
        "attention_combine: feature dim must divide by head count");
  int64_t H = num_heads;
  int64_t B = v.dim(0), Tk = v.dim(1), d = v.dim(2), dh = d / H;
  check(probs.dim(0) == B * H && probs.dim(2) == Tk,
        "attention_combine: probs " + shape_str(probs.shape()) + " does not fit v " +
            shape_str(v.shape()));
  int64_t Tq = probs.dim(1);
  std::vector<double> out(static_cast<size_t>(B * Tq * d), 0.0);
  const auto& pv = probs.values();
  const auto& vv = v.values();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t i = 0; i < Tq; ++i) {
        const double* pr = pv.data() + ((b * H + h) * Tq + i) * Tk;
        double* orow = out.data() + (b * Tq + i) * d + h * dh;
        for (int64_t j = 0; j < Tk; ++j) {
          double p = pr[j];
          if (p == 0.0) continue;
          const double* vr = vv.data() + (b * Tk + j) * d + h * dh;
          for (int64_t t = 0; t < dh; ++t) orow[t] += p * vr[t];
        }
      }
  Out* pd = OpAccess::data(probs);
  Out* vd = OpAccess::data(v);
  return emit(tape, "attention_combine", {&probs, &v},
              {static_cast<int>(B), static_cast<int>(Tq), static_cast<int>(d)}, std::move(out),
              [pd, vd, B, Tq, Tk, d, H, dh](const Out& o) {
                const auto& g = o.grad;
                const auto& pv = pd->values;
                const auto& vv = vd->values;
                double* gp = pd->grad_enabled ? grad_buf(pd).data() : nullptr;
                double* gvv = vd->grad_enabled ? grad_buf(vd).data() : nullptr;
                for (int64_t b = 0; b < B; ++b)
                  for (int64_t h = 0; h < H; ++h)
                    for (int64_t i = 0; i < Tq; ++i) {
                      const double* gr = g.data() + (b * Tq + i) * d + h * dh;
                      const double* pr = pv.data() + ((b * H + h) * Tq + i) * Tk;
                      for (int64_t j = 0; j < Tk; ++j) {
                        const double* vr = vv.data() + (b * Tk + j) * d + h * dh;
                        if (gp) {
                          double dot = 0.0;
                          for (int64_t t = 0; t < dh; ++t) dot += gr[t] * vr[t];
                          gp[static_cast<size_t>(((b * H + h) * Tq + i) * Tk + j)] += dot;
                        }
                        if (gvv && pr[j] != 0.0) {
                          double* gvr = gvv + (b * Tk + j) * d + h * dh;
                          for (int64_t t = 0; t < dh; ++t) gvr[t] += pr[j] * gr[t];
                        }
                      }
                    }
              });
}

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b, int axis) {
  check(a.rank() == b.rank(), "concat: rank mismatch");
  check(axis >= 0 && axis < a.rank(), "concat: axis out of range");
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis)
      check(a.dim(i) == b.dim(i), "concat: shapes " + shape_str(a.shape()) + " and " +
                                      shape_str(b.shape()) + " differ off axis");
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] += b.dim(axis);
  int64_t outer = outer_count(a.shape(), axis);
  int64_t inner = inner_count(a.shape(), axis);
  int64_t a_block = a.dim(axis) * inner, b_block = b.dim(axis) * inner;
  std::vector<double> out(static_cast<size_t>(a.size() + b.size()));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t o = 0; o < outer; ++o) {
    std::memcpy(out.data() + o * (a_block + b_block), av.data() + o * a_block,
                static_cast<size_t>(a_block) * sizeof(double));
    std::memcpy(out.data() + o * (a_block + b_block) + a_block, bv.data() + o * b_block,
                static_cast<size_t>(b_block) * sizeof(double));
  }
  Out* ad = OpAccess::data(a);
  Out* bd = OpAccess::data(b);
  return emit(tape, "concat", {&a, &b}, std::move(out_shape), std::move(out),
              [ad, bd, outer, a_block, b_block](const Out& o) {
                const auto& g = o.grad;
                for (int64_t ou = 0; ou < outer; ++ou) {
                  const double* gr = g.data() + ou * (a_block + b_block);
                  if (ad->grad_enabled) {
                    double* ga = grad_buf(ad).data() + ou * a_block;
                    for (int64_t i = 0; i < a_block; ++i) ga[i] += gr[i];
                  }
                  if (bd->grad_enabled) {
                    double* gb = grad_buf(bd).data() + ou * b_block;
                    for (int64_t i = 0; i < b_block; ++i) gb[i] += gr[a_block + i];
                  }
                }
              });
}

Tensor narrow(Tape& tape, const Tensor& x, int axis, int start, int len) {
  check(axis >= 0 && axis < x.rank(), "narrow: axis out of range");
  check(start >= 0 && len >= 0 && start + len <= x.dim(axis), "narrow: slab out of range");
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = outer_count(x.shape(), axis);
  int64_t inner = inner_count(x.shape(), axis);
  int64_t x_block = x.dim(axis) * inner, o_block = static_cast<int64_t>(len) * inner;
  std::vector<double> out(static_cast<size_t>(outer * o_block));
  const auto& xv = x.values();
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * o_block, xv.data() + o * x_block + start * inner,
                static_cast<size_t>(o_block) * sizeof(double));
  Out* xd = OpAccess::data(x);
  return emit(tape, "narrow", {&x}, std::move(out_shape), std::move(out),
              [xd, outer, inner, x_block, o_block, start](const Out& o) {
                const auto& g = o.grad;
                auto& gx = grad_buf(xd);
                for (int64_t ou = 0; ou < outer; ++ou) {
                  const double* gr = g.data() + ou * o_block;
                  double* gxr = gx.data() + ou * x_block + start * inner;
                  for (int64_t i = 0; i < o_block; ++i) gxr[i] += gr[i];
                }
              });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  check(shape_numel(shape) == x.size(), "reshape: element count changes from " +
                                            shape_str(x.shape()) + " to " + shape_str(shape));
  Out* xd = OpAccess::data(x);
  return emit(tape, "reshape", {&x}, std::move(shape), std::vector<double>(x.values()),
              [xd](const Out& o) {
                const auto& g = o.grad;
                auto& gx = grad_buf(xd);
                for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
              });
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Out* xd = OpAccess::data(x);
  return emit(tape, "sum_all", {&x}, {1}, {s}, [xd](const Out& o) {
    double g = o.grad[0];
    auto& gx = grad_buf(xd);
    for (double& v : gx) v += g;
  });
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  double n = static_cast<double>(x.size());
  Out* xd = OpAccess::data(x);
  return emit(tape, "mean_all", {&x}, {1}, {s / n}, [xd, n](const Out& o) {
    double g = o.grad[0] / n;
    auto& gx = grad_buf(xd);
    for (double& v : gx) v += g;
  });
}

Tensor mse(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mse");
  const auto& av = a.values();
  const auto& bv = b.values();
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    double dlt = av[i] - bv[i];
    s += dlt * dlt;
  }
  double n = static_cast<double>(a.size());
  Out* ad = OpAccess::data(a);
  Out* bd = OpAccess::data(b);
  return emit(tape, "mse", {&a, &b}, {1}, {s / n}, [ad, bd, n](const Out& o) {
    double g = o.grad[0] * 2.0 / n;
    const auto& av = ad->values;
    const auto& bv = bd->values;
    if (ad->grad_enabled) {
      auto& ga = grad_buf(ad);
      for (size_t i = 0; i < av.size(); ++i) ga[i] += g * (av[i] - bv[i]);
    }
    if (bd->grad_enabled) {
      auto& gb = grad_buf(bd);
      for (size_t i = 0; i < av.size(); ++i) gb[i] -= g * (av[i] - bv[i]);
    }
  });
}

// ---- helpers ------------------------------------------------------------------

Tensor sinusoidal_embed(double tau, int dim) {
  check(dim >= 2 && dim % 2 == 0, "sinusoidal_embed: dim must be even and at least 2");
  int half = dim / 2;
  std::vector<double> out(static_cast<size_t>(dim));
  for (int k = 0; k < half; ++k) {
    double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
    out[static_cast<size_t>(k)] = std::sin(tau * freq);
    out[static_cast<size_t>(half + k)] = std::cos(tau * freq);
  }
  return Tensor::constant({dim}, std::move(out));
}

LinearInit linear_zero_init(int in_dim, int out_dim) {
  return LinearInit{Tensor::param_zeros({in_dim, out_dim}), Tensor::param_zeros({out_dim})};
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::fabs(v));
  return m;
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.values().data(), b.values().data(),
                     a.values().size() * sizeof(double)) == 0;
}

}  // namespace pfd
