#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/tensor.hpp"

namespace smnet {

enum class Activation { identity, relu, leaky_relu, tanh };

inline constexpr double kLeakySlope = 0.01;

inline double activate(Activation act, double z) {
  switch (act) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::leaky_relu: return z > 0.0 ? z : kLeakySlope * z;
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: break;
  }
  return z;
}

inline void activate_in_place(Activation act, std::span<double> z) {
  switch (act) {
    case Activation::relu:
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::leaky_relu:
      for (double& v : z) v = v > 0.0 ? v : kLeakySlope * v;
      break;
    case Activation::tanh:
      for (double& v : z) v = std::tanh(v);
      break;
    case Activation::identity:
      break;
  }
}

// Derivative expressed through the activation output y = act(z).
inline double activation_slope(Activation act, double y) {
  switch (act) {
    case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::leaky_relu: return y > 0.0 ? 1.0 : kLeakySlope;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::identity: break;
  }
  return 1.0;
}

inline const char* activation_name(Activation act) {
  switch (act) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: break;
  }
  return "identity";
}

// Handle to a value recorded on a Tape. Invalidated by Tape::truncate().
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  std::uint64_t epoch = 0;

  bool valid() const noexcept { return id != npos; }
};

// Gradients of one backward() call, keyed by parameter.
class GradMap {
 public:
  const Tensor* find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  // Zero tensor of the parameter's shape when the loss does not reach it.
  Tensor get(const Parameter& p) const {
    const Tensor* g = find(p);
    return g ? *g : Tensor(p.value.shape());
  }

  bool contains(const Parameter& p) const { return grads_.count(&p) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

  void insert(const Parameter& p, Tensor g) { grads_[&p] = std::move(g); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

// Records primitive operations for reverse-mode differentiation over one
// truncation window. Nodes are appended in evaluation order, so the record is
// topologically sorted by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t peak_node_count() const noexcept { return peak_; }
  void reset_peak() noexcept { peak_ = nodes_.size(); }
  bool live() const noexcept { return !nodes_.empty(); }
  std::uint64_t epoch() const noexcept { return epoch_; }

  // Drops the whole history. Parameters keep their values; handles from the
  // previous window become stale.
  void truncate() {
    nodes_.clear();
    leaf_ids_.clear();
    ++epoch_;
  }

  const Tensor& value(Var v) const { return node(v).val(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  Var constant(Tensor v) { return push(std::move(v), false, {}); }

  // One node per parameter per window; repeated uses share it so that
  // gradients from every path accumulate into the same adjoint.
  Var leaf(Parameter& p) {
    if (auto it = leaf_ids_.find(&p); it != leaf_ids_.end()) return {it->second, epoch_};
    Node n;
    n.param = &p;
    n.requires_grad = p.requires_grad;
    nodes_.push_back(std::move(n));
    peak_ = std::max(peak_, nodes_.size());
    leaf_ids_[&p] = nodes_.size() - 1;
    return {nodes_.size() - 1, epoch_};
  }

  // act(x W^T + x M^T + b); the two weight branches are summed before the
  // nonlinearity. x is either a vector (in) or a batch (B x in).
  Var dense(Var x, Var w, std::optional<Var> m, std::optional<Var> b, Activation act) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    if (W.rank() != 2) throw DimensionError("dense: weight must be a matrix " + shape_string(W.shape()));
    const std::size_t out = W.rows(), in = W.cols();
    if (X.rank() == 0 || X.rank() > 2 || X.cols() != in)
      throw DimensionError("dense: input does not match weight", X.shape(), W.shape());
    if (m && value(*m).shape() != W.shape())
      throw DimensionError("dense: fast weight does not match slow weight", value(*m).shape(), W.shape());
    if (b && value(*b).shape() != std::vector<std::size_t>{out})
      throw DimensionError("dense: bias does not match output", value(*b).shape(), {out});

    Tensor weff_storage;
    const Tensor* weff = &W;
    if (m) {
      weff_storage = W;
      weff_storage += value(*m);
      weff = &weff_storage;
    }
    const std::size_t batch = X.rows();
    Tensor Y = X.rank() == 1 ? Tensor::vector(out) : Tensor::matrix(batch, out);
    const Tensor* B = b ? &value(*b) : nullptr;
    // Row-major accumulation over the transposed weight keeps the inner loop
    // contiguous in the output dimension.
    std::vector<double> wt(in * out);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = (*weff)[o * in + i];
    for (std::size_t r = 0; r < batch; ++r) {
      const double* xr = X.values().data() + r * in;
      double* yr = Y.values().data() + r * out;
      if (B) std::copy(B->values().begin(), B->values().end(), yr);
      for (std::size_t i = 0; i < in; ++i)
        if (xr[i] != 0.0) detail::axpy(xr[i], wt.data() + i * out, yr, out);
    }
    activate_in_place(act, Y.values());

    std::vector<Var> inputs{x, w};
    if (m) inputs.push_back(*m);
    if (b) inputs.push_back(*b);
    const bool rg = any_requires_grad(inputs);
    Var y = push(std::move(Y), rg, {});
    if (!rg) return y;

    node(y).backward = [this, x, w, m, b, act, y, batch, in, out](const Tensor& g) {
      const Tensor& Yv = value(y);
      Tensor dz(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) dz[i] = g[i] * activation_slope(act, Yv[i]);
      const Tensor& Xv = value(x);
      const bool need_w = requires_grad(w) || (m && requires_grad(*m));
      if (need_w) {
        Tensor dW = Tensor::matrix(out, in);
        for (std::size_t r = 0; r < batch; ++r) {
          const double* xr = Xv.values().data() + r * in;
          for (std::size_t o = 0; o < out; ++o) {
            const double d = dz[r * out + o];
            if (d != 0.0) detail::axpy(d, xr, dW.values().data() + o * in, in);
          }
        }
        if (requires_grad(w)) slot(w) += dW;
        if (m && requires_grad(*m)) slot(*m) += dW;
      }
      if (b && requires_grad(*b)) {
        Tensor& db = slot(*b);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t o = 0; o < out; ++o) db[o] += dz[r * out + o];
      }
      if (requires_grad(x)) {
        Tensor weff = value(w);
        if (m) weff += value(*m);
        Tensor& dx = slot(x);
        for (std::size_t r = 0; r < batch; ++r) {
          double* dxr = dx.values().data() + r * in;
          for (std::size_t o = 0; o < out; ++o) {
            const double d = dz[r * out + o];
            if (d != 0.0) detail::axpy(d, weff.values().data() + o * in, dxr, in);
          }
        }
      }
    };
    return y;
  }

  Var activate(Var x, Activation act) {
    Tensor Y = value(x);
    for (double& v : Y.values()) v = smnet::activate(act, v);
    return unary(x, std::move(Y), [this, x, act](const Tensor& g, Var y) {
      const Tensor& Yv = value(y);
      Tensor& dx = slot(x);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * activation_slope(act, Yv[i]);
    });
  }

  // (n x k)(k x m) -> n x m
  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& Bm = value(b);
    if (A.rank() != 2 || Bm.rank() != 2 || A.cols() != Bm.rows())
      throw DimensionError("matmul: inner dimensions differ", A.shape(), Bm.shape());
    const std::size_t n = A.rows(), k = A.cols(), mcols = Bm.cols();
    Tensor C = Tensor::matrix(n, mcols);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < k; ++p)
        detail::axpy(A(i, p), Bm.values().data() + p * mcols, C.values().data() + i * mcols, mcols);
    return binary(a, b, std::move(C), [this, a, b, n, k, mcols](const Tensor& g, Var) {
      const Tensor& Av = value(a);
      const Tensor& Bv = value(b);
      if (requires_grad(a)) {
        Tensor& da = slot(a);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p)
            da(i, p) += detail::dot(g.values().data() + i * mcols, Bv.values().data() + p * mcols, mcols);
      }
      if (requires_grad(b)) {
        Tensor& db = slot(b);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p)
            detail::axpy(Av(i, p), g.values().data() + i * mcols, db.values().data() + p * mcols, mcols);
      }
    });
  }

  Var add(Var a, Var b) { return elementwise(a, b, +1.0); }
  Var sub(Var a, Var b) { return elementwise(a, b, -1.0); }

  Var mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& Bv = value(b);
    Tensor::require_same_shape(A, Bv, "mul");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] *= Bv[i];
    return binary(a, b, std::move(C), [this, a, b](const Tensor& g, Var) {
      if (requires_grad(a)) {
        const Tensor& Bt = value(b);
        Tensor& da = slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * Bt[i];
      }
      if (requires_grad(b)) {
        const Tensor& At = value(a);
        Tensor& db = slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * At[i];
      }
    });
  }

  Var scale(Var a, double c) {
    Tensor Y = value(a);
    for (double& v : Y.values()) v *= c;
    return unary(a, std::move(Y), [this, a, c](const Tensor& g, Var) {
      Tensor& da = slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += c * g[i];
    });
  }

  Var square(Var a) {
    Tensor Y = value(a);
    for (double& v : Y.values()) v *= v;
    return unary(a, std::move(Y), [this, a](const Tensor& g, Var) {
      const Tensor& A = value(a);
      Tensor& da = slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += 2.0 * A[i] * g[i];
    });
  }

  Var exp(Var a) {
    Tensor Y = value(a);
    for (double& v : Y.values()) v = std::exp(v);
    return unary(a, std::move(Y), [this, a](const Tensor& g, Var y) {
      const Tensor& Yv = value(y);
      Tensor& da = slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += Yv[i] * g[i];
    });
  }

  Var sum(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double v : A.values()) s += v;
    return unary(a, Tensor::scalar(s), [this, a](const Tensor& g, Var) {
      Tensor& da = slot(a);
      for (double& v : da.values()) v += g[0];
    });
  }

  Var mean(Var a) {
    const std::size_t n = value(a).size();
    if (n == 0) throw DimensionError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
  }

  // Row-wise log-softmax over the last dimension.
  Var log_softmax_rows(Var a) {
    Tensor Y = value(a);
    const std::size_t rows = Y.rows(), cols = Y.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = Y.row(r);
      double mx = row[0];
      for (double v : row) mx = std::max(mx, v);
      double s = 0.0;
      for (double v : row) s += std::exp(v - mx);
      const double lse = mx + std::log(s);
      for (double& v : row) v -= lse;
    }
    return unary(a, std::move(Y), [this, a, rows, cols](const Tensor& g, Var y) {
      const Tensor& Yv = value(y);
      Tensor& da = slot(a);
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          da[r * cols + c] += g[r * cols + c] - std::exp(Yv[r * cols + c]) * gs;
      }
    });
  }

  // B x C -> B
  Var sum_rows(Var a) {
    const Tensor& A = value(a);
    const std::size_t rows = A.rows(), cols = A.cols();
    Tensor Y = Tensor::vector(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) Y[r] += A(r, c);
    return unary(a, std::move(Y), [this, a, cols](const Tensor& g, Var) {
      Tensor& da = slot(a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i / cols];
    });
  }

  // B x C, one column index per row -> B
  Var pick_rows(Var a, std::vector<int> index) {
    const Tensor& A = value(a);
    if (index.size() != A.rows())
      throw DimensionError("pick_rows: " + std::to_string(index.size()) + " indices for " +
                           std::to_string(A.rows()) + " rows");
    Tensor Y = Tensor::vector(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= A.cols())
        throw DimensionError("pick_rows: column index out of range");
      Y[r] = A(r, static_cast<std::size_t>(index[r]));
    }
    return unary(a, std::move(Y), [this, a, index = std::move(index)](const Tensor& g, Var) {
      Tensor& da = slot(a);
      for (std::size_t r = 0; r < index.size(); ++r) da(r, static_cast<std::size_t>(index[r])) += g[r];
    });
  }

  Var flatten(Var a) {
    const Tensor& A = value(a);
    return unary(a, A.reshaped({A.size()}), [this, a](const Tensor& g, Var) {
      Tensor& da = slot(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    });
  }

  // Dense tensor of `shape`, zero except values[i] at flat index[i].
  Var scatter(Var values, std::span<const std::uint32_t> index, std::vector<std::size_t> shape) {
    const Tensor& V = value(values);
    if (V.size() != index.size())
      throw DimensionError("scatter: " + std::to_string(V.size()) + " values for " +
                           std::to_string(index.size()) + " coordinates");
    Tensor Y(std::move(shape));
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= Y.size()) throw DimensionError("scatter: coordinate out of range");
      Y[index[i]] = V[i];
    }
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return unary(values, std::move(Y), [this, values, idx = std::move(idx)](const Tensor& g, Var) {
      Tensor& dv = slot(values);
      for (std::size_t i = 0; i < idx.size(); ++i) dv[i] += g[idx[i]];
    });
  }

  // (1 - A) * prev + sparse, with A the indicator of `index`. Unmasked
  // coordinates are copied, so they stay bitwise identical to prev.
  Var mask_blend(Var prev, Var sparse, std::span<const std::uint32_t> index) {
    const Tensor& P = value(prev);
    const Tensor& S = value(sparse);
    Tensor::require_same_shape(P, S, "mask_blend");
    Tensor Y = P;
    for (std::uint32_t i : index) Y[i] = S[i];
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return binary(prev, sparse, std::move(Y), [this, prev, sparse, idx = std::move(idx)](const Tensor& g, Var) {
      if (requires_grad(prev)) {
        Tensor& dp = slot(prev);
        Tensor gp = g;
        for (std::uint32_t i : idx) gp[i] = 0.0;
        dp += gp;
      }
      if (requires_grad(sparse)) slot(sparse) += g;
    });
  }

  Var cross_entropy(Var logits, std::vector<int> labels) {
    Var lp = log_softmax_rows(logits);
    return scale(mean(pick_rows(lp, std::move(labels))), -1.0);
  }

  // Signature of a custom op's reverse rule: the output adjoint plus one
  // adjoint slot per input (nullptr where no gradient is needed), to be
  // accumulated into.
  using Pullback = std::function<void(const Tensor&, std::span<Tensor* const>)>;

  // Records a value computed outside the tape as a function of `inputs`.
  Var custom(Tensor y, std::vector<Var> inputs, Pullback pullback) {
    const bool rg = any_requires_grad(inputs);
    Var out = push(std::move(y), rg, {});
    if (!rg) return out;
    nodes_[out.id].backward = [this, inputs = std::move(inputs), pb = std::move(pullback)](const Tensor& g) {
      std::vector<Tensor*> slots;
      slots.reserve(inputs.size());
      for (Var v : inputs) slots.push_back(requires_grad(v) ? &slot(v) : nullptr);
      pb(g, slots);
    };
    return out;
  }

  // Populates Parameter::grad (accumulating) for every tracked leaf reached
  // from `loss`, and returns this call's gradients alone.
  GradMap backward(Var loss) {
    if (nodes_.empty()) throw StateError("backward on an empty or truncated tape");
    const Node& ln = node(loss);
    if (ln.val().size() != 1)
      throw DimensionError("backward: loss must be a scalar, got " + shape_string(ln.val().shape()));

    adj_.assign(nodes_.size(), Tensor{});
    has_adj_.assign(nodes_.size(), 0);
    adj_[loss.id] = Tensor(ln.val().shape(), 1.0);
    has_adj_[loss.id] = 1;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      const Node& n = nodes_[id];
      if (!has_adj_[id] || !n.requires_grad || !n.backward) continue;
      n.backward(adj_[id]);
    }

    GradMap out;
    for (std::size_t id = 0; id <= loss.id; ++id) {
      Node& n = nodes_[id];
      if (!n.param || !n.requires_grad || !has_adj_[id]) continue;
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      p.grad += adj_[id];
      out.insert(p, std::move(adj_[id]));
    }
    adj_.clear();
    has_adj_.clear();
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Parameter* param = nullptr;
    bool requires_grad = false;
    std::function<void(const Tensor&)> backward;

    const Tensor& val() const { return param ? param->value : value; }
  };

  Node& node(Var v) {
    check(v);
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    check(v);
    return nodes_[v.id];
  }

  void check(Var v) const {
    if (!v.valid() || v.epoch != epoch_ || v.id >= nodes_.size())
      throw StateError("stale handle: the tape was truncated after this value was recorded");
  }

  bool any_requires_grad(std::span<const Var> vs) const {
    for (Var v : vs)
      if (requires_grad(v)) return true;
    return false;
  }

  Var push(Tensor v, bool rg, std::function<void(const Tensor&)> bw) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = rg;
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    peak_ = std::max(peak_, nodes_.size());
    return {nodes_.size() - 1, epoch_};
  }

  // Adjoint buffer for an input, zero-initialized on first touch.
  Tensor& slot(Var v) {
    if (!has_adj_[v.id]) {
      adj_[v.id] = Tensor(nodes_[v.id].val().shape());
      has_adj_[v.id] = 1;
    }
    return adj_[v.id];
  }

  template <class F>
  Var unary(Var a, Tensor y, F&& f) {
    const bool rg = requires_grad(a);
    Var out = push(std::move(y), rg, {});
    if (rg) nodes_[out.id].backward = [f = std::forward<F>(f), out](const Tensor& g) { f(g, out); };
    return out;
  }

  template <class F>
  Var binary(Var a, Var b, Tensor y, F&& f) {
    const bool rg = requires_grad(a) || requires_grad(b);
    Var out = push(std::move(y), rg, {});
    if (rg) nodes_[out.id].backward = [f = std::forward<F>(f), out](const Tensor& g) { f(g, out); };
    return out;
  }

  Var elementwise(Var a, Var b, double sign) {
    const Tensor& A = value(a);
    const Tensor& Bv = value(b);
    Tensor::require_same_shape(A, Bv, sign > 0 ? "add" : "sub");
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += sign * Bv[i];
    return binary(a, b, std::move(C), [this, a, b, sign](const Tensor& g, Var) {
      if (requires_grad(a)) slot(a) += g;
      if (requires_grad(b)) {
        Tensor& db = slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += sign * g[i];
      }
    });
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaf_ids_;
  std::vector<Tensor> adj_;
  std::vector<char> has_adj_;
  std::uint64_t epoch_ = 1;
  std::size_t peak_ = 0;
};

// forward_dense on plain tensors: act(W x + M x + b), no recording.
inline Tensor forward_dense(const Tensor& x, const Tensor& w, const Tensor& m, const Tensor& b,
                            Activation act) {
  Tape tape;
  Var y = tape.dense(tape.constant(x), tape.constant(w), tape.constant(m), tape.constant(b), act);
  return tape.value(y);
}

}  // namespace smnet
