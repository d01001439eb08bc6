#pragma once

// Reverse-mode differentiation over dense vectors and matrices.
//
// A Tape records every node produced from a recorded input, in creation
// order; that order is topological, so backward() is a single reverse sweep.
// Values produced only from constants (or from a non-recording Tape) carry no
// tape and no backward closure, so the same op functions serve inference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrkg/tensor.hpp"

namespace corrkg {

template <class T>
class Tape;

namespace detail {

template <class T>
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> storage;
  const T* external = nullptr;  // aliases a parameter tensor
  std::vector<T> grad;
  T* grad_sink = nullptr;  // parameter gradient accumulator
  std::function<void()> backward;

  std::size_t size() const { return rows * cols; }
  const T* data() const { return external ? external : storage.data(); }
  T* grad_buffer() {
    if (grad_sink) return grad_sink;
    if (grad.empty()) grad.assign(size(), T{0});
    return grad.data();
  }
};

}  // namespace detail

/// Handle to a node. Cheap to copy; shares the node.
template <class T>
class Var {
 public:
  Var() = default;
  Var(std::shared_ptr<detail::Node<T>> node, Tape<T>* tape)
      : node_(std::move(node)), tape_(tape) {}

  bool valid() const { return node_ != nullptr; }
  bool recorded() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }

  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }

  std::span<const T> value() const { return {node_->data(), node_->size()}; }
  T operator[](std::size_t i) const { return node_->data()[i]; }
  T item() const {
    if (size() != 1) throw std::logic_error("item: not a scalar");
    return node_->data()[0];
  }
  std::vector<T> to_vector() const { return {value().begin(), value().end()}; }

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
  Tape<T>* tape_ = nullptr;
};

template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Leaf aliasing `value` (no copy). When recording, gradients accumulate
  /// into `grad_sink`, which must match value's size. Binding the same tensor
  /// twice yields the same node.
  Var<T> leaf(const Tensor<T>& value, Tensor<T>* grad_sink) {
    if (auto it = leaves_.find(&value); it != leaves_.end()) return it->second;
    auto node = std::make_shared<detail::Node<T>>();
    node->rows = value.rows();
    node->cols = value.cols();
    node->external = value.data();
    Tape<T>* owner = nullptr;
    if (recording_ && grad_sink) {
      if (grad_sink->size() != value.size()) {
        throw std::invalid_argument("tape leaf: gradient buffer shape mismatch");
      }
      node->grad_sink = grad_sink->data();
      nodes_.push_back(node);
      owner = this;
    }
    Var<T> v(node, owner);
    leaves_.emplace(&value, v);
    return v;
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape once. Parameter gradients
  /// accumulate into their sinks; callers zero them between steps.
  void backward(const Var<T>& loss) {
    if (!loss.valid() || nodes_.empty() || loss.tape() != this) {
      throw std::logic_error("backward: loss was not recorded on this tape");
    }
    if (loss.size() != 1) throw std::logic_error("backward: loss must be a scalar");
    if (consumed_) throw std::logic_error("backward: tape already consumed");
    consumed_ = true;
    loss.node()->grad_buffer()[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto& n = **it;
      if (n.backward && !n.grad.empty()) n.backward();
    }
  }

  void adopt(std::shared_ptr<detail::Node<T>> node) { nodes_.push_back(std::move(node)); }

 private:
  bool recording_;
  bool consumed_ = false;
  std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
  std::unordered_map<const Tensor<T>*, Var<T>> leaves_;
};

namespace detail {

template <class T>
Tape<T>* common_tape(std::initializer_list<const Var<T>*> vars) {
  Tape<T>* tape = nullptr;
  for (const Var<T>* v : vars) {
    if (!v->recorded()) continue;
    if (tape && tape != v->tape()) throw std::logic_error("ops: vars from different tapes");
    tape = v->tape();
  }
  return tape;
}

template <class T>
Tape<T>* common_tape(const std::vector<Var<T>>& vars) {
  Tape<T>* tape = nullptr;
  for (const Var<T>& v : vars) {
    if (!v.recorded()) continue;
    if (tape && tape != v.tape()) throw std::logic_error("ops: vars from different tapes");
    tape = v.tape();
  }
  return tape;
}

template <class T>
Var<T> fresh(std::size_t rows, std::size_t cols, Tape<T>* tape) {
  auto node = std::make_shared<Node<T>>();
  node->rows = rows;
  node->cols = cols;
  node->storage.assign(rows * cols, T{0});
  if (tape) tape->adopt(node);
  return Var<T>(std::move(node), tape);
}

// Gradient buffer of an input, or nullptr if the input is not differentiated.
template <class T>
T* gbuf(const std::shared_ptr<Node<T>>& n, bool recorded) {
  return recorded ? n->grad_buffer() : nullptr;
}

inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

template <class T>
std::string dims(const Var<T>& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Leaves

template <class T>
Var<T> constant(const Tensor<T>& value) {
  auto node = std::make_shared<detail::Node<T>>();
  node->rows = value.rows();
  node->cols = value.cols();
  node->storage.assign(value.values().begin(), value.values().end());
  return Var<T>(std::move(node), nullptr);
}

template <class T>
Var<T> constant(std::vector<T> values) {
  auto node = std::make_shared<detail::Node<T>>();
  node->rows = values.size();
  node->cols = 1;
  node->storage = std::move(values);
  return Var<T>(std::move(node), nullptr);
}

template <class T>
Var<T> zeros(std::size_t n) {
  return constant(std::vector<T>(n, T{0}));
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.size() == b.size(), "add", detail::dims(a) + " vs " + detail::dims(b));
  Tape<T>* tape = detail::common_tape({&a, &b});
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = a[i] + b[i];
  if (tape) {
    o->backward = [an = a.node_ptr(), bn = b.node_ptr(), ar = a.recorded(), br = b.recorded(), o] {
      const std::size_t n = o->size();
      if (T* ga = detail::gbuf(an, ar)) for (std::size_t i = 0; i < n; ++i) ga[i] += o->grad[i];
      if (T* gb = detail::gbuf(bn, br)) for (std::size_t i = 0; i < n; ++i) gb[i] += o->grad[i];
    };
  }
  return out;
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require(a.size() == b.size(), "sub", detail::dims(a) + " vs " + detail::dims(b));
  Tape<T>* tape = detail::common_tape({&a, &b});
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = a[i] - b[i];
  if (tape) {
    o->backward = [an = a.node_ptr(), bn = b.node_ptr(), ar = a.recorded(), br = b.recorded(), o] {
      const std::size_t n = o->size();
      if (T* ga = detail::gbuf(an, ar)) for (std::size_t i = 0; i < n; ++i) ga[i] += o->grad[i];
      if (T* gb = detail::gbuf(bn, br)) for (std::size_t i = 0; i < n; ++i) gb[i] -= o->grad[i];
    };
  }
  return out;
}

template <class T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
  detail::require(a.size() == b.size(), "hadamard", detail::dims(a) + " vs " + detail::dims(b));
  Tape<T>* tape = detail::common_tape({&a, &b});
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = a[i] * b[i];
  if (tape) {
    o->backward = [an = a.node_ptr(), bn = b.node_ptr(), ar = a.recorded(), br = b.recorded(), o] {
      const std::size_t n = o->size();
      const T* av = an->data();
      const T* bv = bn->data();
      if (T* ga = detail::gbuf(an, ar)) for (std::size_t i = 0; i < n; ++i) ga[i] += o->grad[i] * bv[i];
      if (T* gb = detail::gbuf(bn, br)) for (std::size_t i = 0; i < n; ++i) gb[i] += o->grad[i] * av[i];
    };
  }
  return out;
}

template <class T>
Var<T> scale(const Var<T>& a, T k) {
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = a[i] * k;
  if (tape) {
    o->backward = [an = a.node_ptr(), k, o] {
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < o->size(); ++i) ga[i] += o->grad[i] * k;
    };
  }
  return out;
}

/// 1 - x, elementwise.
template <class T>
Var<T> one_minus(const Var<T>& a) {
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = T{1} - a[i];
  if (tape) {
    o->backward = [an = a.node_ptr(), o] {
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < o->size(); ++i) ga[i] -= o->grad[i];
    };
  }
  return out;
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = detail::stable_sigmoid(a[i]);
  if (tape) {
    o->backward = [an = a.node_ptr(), o] {
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < o->size(); ++i) {
        const T y = o->storage[i];
        ga[i] += o->grad[i] * y * (T{1} - y);
      }
    };
  }
  return out;
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  auto* o = out.node();
  for (std::size_t i = 0; i < o->size(); ++i) o->storage[i] = std::tanh(a[i]);
  if (tape) {
    o->backward = [an = a.node_ptr(), o] {
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < o->size(); ++i) {
        const T y = o->storage[i];
        ga[i] += o->grad[i] * (T{1} - y * y);
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& a) {
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(1, 1, tape);
  T acc{0};
  for (T x : a.value()) acc += x;
  out.node()->storage[0] = acc;
  if (tape) {
    out.node()->backward = [an = a.node_ptr(), o = out.node()] {
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < an->size(); ++i) ga[i] += o->grad[0];
    };
  }
  return out;
}

template <class T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  detail::require(a.size() == b.size(), "dot", detail::dims(a) + " vs " + detail::dims(b));
  Tape<T>* tape = detail::common_tape({&a, &b});
  Var<T> out = detail::fresh<T>(1, 1, tape);
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  out.node()->storage[0] = acc;
  if (tape) {
    out.node()->backward = [an = a.node_ptr(), bn = b.node_ptr(), ar = a.recorded(),
                            br = b.recorded(), o = out.node()] {
      const T g = o->grad[0];
      const std::size_t n = an->size();
      if (T* ga = detail::gbuf(an, ar)) for (std::size_t i = 0; i < n; ++i) ga[i] += g * bn->data()[i];
      if (T* gb = detail::gbuf(bn, br)) for (std::size_t i = 0; i < n; ++i) gb[i] += g * an->data()[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// W (m x n) times x (n) -> m.
template <class T>
Var<T> matvec(const Var<T>& W, const Var<T>& x) {
  detail::require(W.cols() == x.size(), "matvec", detail::dims(W) + " * " + detail::dims(x));
  Tape<T>* tape = detail::common_tape({&W, &x});
  const std::size_t m = W.rows(), n = W.cols();
  Var<T> out = detail::fresh<T>(m, 1, tape);
  const T* w = W.node()->data();
  const T* xv = x.node()->data();
  T* o = out.node()->storage.data();
  for (std::size_t i = 0; i < m; ++i) {
    T acc{0};
    const T* row = w + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    o[i] = acc;
  }
  if (tape) {
    out.node()->backward = [wn = W.node_ptr(), xn = x.node_ptr(), wr = W.recorded(),
                            xr = x.recorded(), on = out.node(), m, n] {
      const T* g = on->grad.data();
      const T* w = wn->data();
      const T* xv = xn->data();
      if (T* gw = detail::gbuf(wn, wr)) {
        for (std::size_t i = 0; i < m; ++i) {
          if (g[i] == T{0}) continue;
          T* row = gw + i * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += g[i] * xv[j];
        }
      }
      if (T* gx = detail::gbuf(xn, xr)) {
        for (std::size_t i = 0; i < m; ++i) {
          const T* row = w + i * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * g[i];
        }
      }
    };
  }
  return out;
}

/// M^T y for M (m x n), y (m) -> n. Used for attention-weighted sums of rows.
template <class T>
Var<T> matvec_t(const Var<T>& M, const Var<T>& y) {
  detail::require(M.rows() == y.size(), "matvec_t", detail::dims(M) + "^T * " + detail::dims(y));
  Tape<T>* tape = detail::common_tape({&M, &y});
  const std::size_t m = M.rows(), n = M.cols();
  Var<T> out = detail::fresh<T>(n, 1, tape);
  const T* mv = M.node()->data();
  const T* yv = y.node()->data();
  T* o = out.node()->storage.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = mv + i * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += row[j] * yv[i];
  }
  if (tape) {
    out.node()->backward = [mn = M.node_ptr(), yn = y.node_ptr(), mr = M.recorded(),
                            yr = y.recorded(), on = out.node(), m, n] {
      const T* g = on->grad.data();
      const T* mv = mn->data();
      const T* yv = yn->data();
      if (T* gm = detail::gbuf(mn, mr)) {
        for (std::size_t i = 0; i < m; ++i) {
          T* row = gm + i * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += yv[i] * g[j];
        }
      }
      if (T* gy = detail::gbuf(yn, yr)) {
        for (std::size_t i = 0; i < m; ++i) {
          const T* row = mv + i * n;
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += row[j] * g[j];
          gy[i] += acc;
        }
      }
    };
  }
  return out;
}

/// A (m x k) times W^T for W (p x k) -> m x p.
template <class T>
Var<T> matmul_nt(const Var<T>& A, const Var<T>& W) {
  detail::require(A.cols() == W.cols(), "matmul_nt", detail::dims(A) + " * " + detail::dims(W) + "^T");
  Tape<T>* tape = detail::common_tape({&A, &W});
  const std::size_t m = A.rows(), k = A.cols(), p = W.rows();
  Var<T> out = detail::fresh<T>(m, p, tape);
  const T* av = A.node()->data();
  const T* wv = W.node()->data();
  T* o = out.node()->storage.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t q = 0; q < p; ++q) {
      T acc{0};
      for (std::size_t c = 0; c < k; ++c) acc += av[i * k + c] * wv[q * k + c];
      o[i * p + q] = acc;
    }
  }
  if (tape) {
    out.node()->backward = [an = A.node_ptr(), wn = W.node_ptr(), ar = A.recorded(),
                            wr = W.recorded(), on = out.node(), m, k, p] {
      const T* g = on->grad.data();
      const T* av = an->data();
      const T* wv = wn->data();
      T* ga = detail::gbuf(an, ar);
      T* gw = detail::gbuf(wn, wr);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
          const T gi = g[i * p + q];
          if (gi == T{0}) continue;
          if (ga) for (std::size_t c = 0; c < k; ++c) ga[i * k + c] += gi * wv[q * k + c];
          if (gw) for (std::size_t c = 0; c < k; ++c) gw[q * k + c] += gi * av[i * k + c];
        }
      }
    };
  }
  return out;
}

/// M (m x n) plus q (n) added to every row.
template <class T>
Var<T> add_row(const Var<T>& M, const Var<T>& q) {
  detail::require(M.cols() == q.size(), "add_row", detail::dims(M) + " + " + detail::dims(q));
  Tape<T>* tape = detail::common_tape({&M, &q});
  const std::size_t m = M.rows(), n = M.cols();
  Var<T> out = detail::fresh<T>(m, n, tape);
  T* o = out.node()->storage.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = M[i * n + j] + q[j];
  if (tape) {
    out.node()->backward = [mn = M.node_ptr(), qn = q.node_ptr(), mr = M.recorded(),
                            qr = q.recorded(), on = out.node(), m, n] {
      const T* g = on->grad.data();
      if (T* gm = detail::gbuf(mn, mr)) for (std::size_t i = 0; i < m * n; ++i) gm[i] += g[i];
      if (T* gq = detail::gbuf(qn, qr)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gq[j] += g[i * n + j];
      }
    };
  }
  return out;
}

/// M (m x n) plus the outer product c (m) w^T (n).
template <class T>
Var<T> add_outer(const Var<T>& M, const Var<T>& c, const Var<T>& w) {
  detail::require(M.rows() == c.size() && M.cols() == w.size(), "add_outer",
                  detail::dims(M) + " + " + detail::dims(c) + " x " + detail::dims(w));
  Tape<T>* tape = detail::common_tape({&M, &c, &w});
  const std::size_t m = M.rows(), n = M.cols();
  Var<T> out = detail::fresh<T>(m, n, tape);
  T* o = out.node()->storage.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = M[i * n + j] + c[i] * w[j];
  if (tape) {
    out.node()->backward = [mn = M.node_ptr(), cn = c.node_ptr(), wn = w.node_ptr(),
                            mr = M.recorded(), cr = c.recorded(), wr = w.recorded(),
                            on = out.node(), m, n] {
      const T* g = on->grad.data();
      if (T* gm = detail::gbuf(mn, mr)) for (std::size_t i = 0; i < m * n; ++i) gm[i] += g[i];
      T* gc = detail::gbuf(cn, cr);
      T* gw = detail::gbuf(wn, wr);
      const T* cv = cn->data();
      const T* wv = wn->data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const T gi = g[i * n + j];
          if (gc) gc[i] += gi * wv[j];
          if (gw) gw[j] += gi * cv[i];
        }
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape plumbing

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat", "no inputs");
  Tape<T>* tape = detail::common_tape(parts);
  std::size_t n = 0;
  for (const auto& p : parts) n += p.size();
  Var<T> out = detail::fresh<T>(n, 1, tape);
  T* o = out.node()->storage.data();
  for (const auto& p : parts) o = std::copy(p.value().begin(), p.value().end(), o);
  if (tape) {
    std::vector<std::shared_ptr<detail::Node<T>>> nodes;
    std::vector<bool> rec;
    for (const auto& p : parts) {
      nodes.push_back(p.node_ptr());
      rec.push_back(p.recorded());
    }
    out.node()->backward = [nodes = std::move(nodes), rec = std::move(rec), on = out.node()] {
      const T* g = on->grad.data();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const std::size_t len = nodes[k]->size();
        if (T* gp = detail::gbuf(nodes[k], static_cast<bool>(rec[k])))
          for (std::size_t i = 0; i < len; ++i) gp[i] += g[i];
        g += len;
      }
    };
  }
  return out;
}

template <class T>
Var<T> slice(const Var<T>& a, std::size_t offset, std::size_t len) {
  detail::require(offset + len <= a.size(), "slice", "range past end of " + detail::dims(a));
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(len, 1, tape);
  std::copy_n(a.node()->data() + offset, len, out.node()->storage.data());
  if (tape) {
    out.node()->backward = [an = a.node_ptr(), on = out.node(), offset, len] {
      T* ga = an->grad_buffer() + offset;
      for (std::size_t i = 0; i < len; ++i) ga[i] += on->grad[i];
    };
  }
  return out;
}

/// Row `index` of E as a vector.
template <class T>
Var<T> gather_row(const Var<T>& E, std::size_t index) {
  detail::require(index < E.rows(), "gather_row",
                  "row " + std::to_string(index) + " of " + detail::dims(E));
  Tape<T>* tape = E.tape();
  const std::size_t n = E.cols();
  Var<T> out = detail::fresh<T>(n, 1, tape);
  std::copy_n(E.node()->data() + index * n, n, out.node()->storage.data());
  if (tape) {
    out.node()->backward = [en = E.node_ptr(), on = out.node(), index, n] {
      T* ge = en->grad_buffer() + index * n;
      for (std::size_t i = 0; i < n; ++i) ge[i] += on->grad[i];
    };
  }
  return out;
}

/// Stacks equal-length vectors as the rows of a matrix.
template <class T>
Var<T> stack_rows(const std::vector<Var<T>>& rows) {
  detail::require(!rows.empty(), "stack_rows", "no inputs");
  const std::size_t n = rows.front().size();
  for (const auto& r : rows) detail::require(r.size() == n, "stack_rows", "ragged rows");
  Var<T> out = concat(rows);
  out.node()->rows = rows.size();
  out.node()->cols = n;
  return out;
}

// ---------------------------------------------------------------------------
// Probability

template <class T>
Var<T> softmax(const Var<T>& a) {
  detail::require(a.size() > 0, "softmax", "empty input");
  Tape<T>* tape = a.tape();
  Var<T> out = detail::fresh<T>(a.rows(), a.cols(), tape);
  T* o = out.node()->storage.data();
  const auto v = a.value();
  const T mx = *std::max_element(v.begin(), v.end());
  T z{0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    o[i] = std::exp(v[i] - mx);
    z += o[i];
  }
  for (std::size_t i = 0; i < v.size(); ++i) o[i] /= z;
  if (tape) {
    out.node()->backward = [an = a.node_ptr(), on = out.node()] {
      const std::size_t n = on->size();
      const T* y = on->storage.data();
      const T* g = on->grad.data();
      T gy{0};
      for (std::size_t i = 0; i < n; ++i) gy += g[i] * y[i];
      T* ga = an->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += y[i] * (g[i] - gy);
    };
  }
  return out;
}

/// -log( sum_{i in indices} softmax(logits)_i ), evaluated as
/// logsumexp(all) - logsumexp(selected). Indices must be distinct.
template <class T>
Var<T> neg_log_mass(const Var<T>& logits, std::vector<std::size_t> indices) {
  detail::require(!indices.empty(), "neg_log_mass", "empty index set");
  for (auto i : indices) {
    detail::require(i < logits.size(), "neg_log_mass",
                    "index " + std::to_string(i) + " out of " + std::to_string(logits.size()));
  }
  const auto v = logits.value();
  const T mx = *std::max_element(v.begin(), v.end());
  T z_all{0};
  for (T x : v) z_all += std::exp(x - mx);
  T mx_sel = -std::numeric_limits<T>::infinity();
  for (auto i : indices) mx_sel = std::max(mx_sel, v[i]);
  T z_sel{0};
  for (auto i : indices) z_sel += std::exp(v[i] - mx_sel);
  const T lse_all = mx + std::log(z_all);
  const T lse_sel = mx_sel + std::log(z_sel);

  Tape<T>* tape = logits.tape();
  Var<T> out = detail::fresh<T>(1, 1, tape);
  out.node()->storage[0] = lse_all - lse_sel;
  if (tape) {
    out.node()->backward = [ln = logits.node_ptr(), on = out.node(), idx = std::move(indices),
                            lse_all, lse_sel] {
      const T g = on->grad[0];
      const T* x = ln->data();
      T* gl = ln->grad_buffer();
      for (std::size_t i = 0; i < ln->size(); ++i) gl[i] += g * std::exp(x[i] - lse_all);
      for (auto i : idx) gl[i] -= g * std::exp(x[i] - lse_sel);
    };
  }
  return out;
}

/// Inverted dropout with a fixed mask: entries are 0 or 1/(1-rate).
template <class T>
Var<T> apply_mask(const Var<T>& a, std::vector<T> mask) {
  detail::require(mask.size() == a.size(), "apply_mask", "mask size mismatch");
  return hadamard(a, constant(std::move(mask)));
}

}  // namespace corrkg
