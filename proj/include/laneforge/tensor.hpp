#pragma once

// Dense tensors plus a reverse-mode tape. Tensors are shared-value handles,
// immutable once built by an op; a Tape records one forward pass and replays
// it backwards. One training step owns one tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "laneforge/common.hpp"

namespace laneforge {

namespace detail {

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // sized lazily, same extent as value when present
  bool requires_grad = false;
  bool on_tape = false;  // produced by a recorded op

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
};

}  // namespace detail

template <class Real>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<Real>>;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0)) : n_(std::make_shared<detail::Node<Real>>()) {
    n_->shape = std::move(shape);
    n_->value.assign((std::size_t)numel(n_->shape), fill);
  }

  Tensor(Shape shape, std::vector<Real> data) : n_(std::make_shared<detail::Node<Real>>()) {
    if ((long long)data.size() != numel(shape))
      throw ShapeError("data size does not match shape " + shape_str(shape));
    n_->shape = std::move(shape);
    n_->value = std::move(data);
  }

  static Tensor scalar(Real v) { return Tensor(Shape{1}, std::vector<Real>{v}); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return (int)n_->shape.size(); }
  int dim(int i) const { return n_->shape[(size_t)i]; }
  long long size() const { return (long long)n_->value.size(); }

  Real* data() { return n_->value.data(); }
  const Real* data() const { return n_->value.data(); }
  std::vector<Real>& values() { return n_->value; }
  const std::vector<Real>& values() const { return n_->value; }

  Real operator[](long long i) const { return n_->value[(std::size_t)i]; }

  Real item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return n_->value[0];
  }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }
  bool on_tape() const { return n_ && n_->on_tape; }

  std::vector<Real>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<Real>& grad() const { return n_->grad; }
  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), Real(0));
  }

  bool all_finite() const {
    for (Real v : n_->value)
      if (!std::isfinite((double)v)) return false;
    return true;
  }

  NodePtr node() const { return n_; }

  /// Deep copy of values (no grad, no tape linkage).
  Tensor clone_values() const { return Tensor(n_->shape, n_->value); }

 private:
  NodePtr n_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <class Real>
class Tape {
 public:
  struct Record {
    typename Tensor<Real>::NodePtr out;
    std::function<void()> back;
  };

  static Tape*& active() {
    thread_local Tape* t = nullptr;
    return t;
  }

  /// RAII activation; tapes nest per thread.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active()) { active() = &t; }
    ~Scope() { active() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  void record(typename Tensor<Real>::NodePtr out, std::function<void()> back) {
    recs_.push_back({std::move(out), std::move(back)});
  }

  std::size_t size() const { return recs_.size(); }

  /// Reverse sweep from a scalar root. Leaf gradients accumulate across calls;
  /// intermediate gradients are reset each sweep.
  void backward(const Tensor<Real>& root) {
    if (root.size() != 1) throw ShapeError("backward root must be scalar");
    if (!root.on_tape()) throw Error("backward: root is detached from the tape");
    for (auto& r : recs_) {
      r.out->ensure_grad();
      std::fill(r.out->grad.begin(), r.out->grad.end(), Real(0));
    }
    root.node()->grad[0] += Real(1);
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) it->back();
  }

  void clear() { recs_.clear(); }

 private:
  std::vector<Record> recs_;
};

namespace detail {

template <class Real>
inline bool tracing(std::initializer_list<const Tensor<Real>*> inputs) {
  if (!Tape<Real>::active()) return false;
  for (auto* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

template <class Real>
inline void mark_out(Tensor<Real>& out) {
  out.node()->requires_grad = true;
  out.node()->on_tape = true;
}

}  // namespace detail

/// Convenience free function mirroring the tape method.
template <class Real>
inline void backward(const Tensor<Real>& loss) {
  if (!Tape<Real>::active()) throw Error("backward: no active tape");
  Tape<Real>::active()->backward(loss);
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// Broadcast classes for binary ops: identical shapes or scalar rhs.
enum class Bcast { same, scalar_b };

template <class Real>
Bcast binary_mode(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (b.size() == 1 && a.size() >= 1) return Bcast::scalar_b;
  if (same_shape(a.shape(), b.shape())) return Bcast::same;
  throw ShapeError("binary op operands " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  auto mode = detail::binary_mode(a, b);
  Tensor<Real> y(a.shape());
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* py = y.data();
  long long n = a.size();
  if (mode == detail::Bcast::same)
    for (long long i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  else
    for (long long i = 0; i < n; ++i) py[i] = pa[i] + pb[0];
  if (detail::tracing<Real>({&a, &b})) {
    detail::mark_out(y);
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, bn, yn, mode, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (long long i = 0; i < n; ++i) an->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (mode == detail::Bcast::same)
          for (long long i = 0; i < n; ++i) bn->grad[i] += yn->grad[i];
        else
          for (long long i = 0; i < n; ++i) bn->grad[0] += yn->grad[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  auto mode = detail::binary_mode(a, b);
  Tensor<Real> y(a.shape());
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* py = y.data();
  long long n = a.size();
  if (mode == detail::Bcast::same)
    for (long long i = 0; i < n; ++i) py[i] = pa[i] - pb[i];
  else
    for (long long i = 0; i < n; ++i) py[i] = pa[i] - pb[0];
  if (detail::tracing<Real>({&a, &b})) {
    detail::mark_out(y);
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, bn, yn, mode, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (long long i = 0; i < n; ++i) an->grad[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (mode == detail::Bcast::same)
          for (long long i = 0; i < n; ++i) bn->grad[i] -= yn->grad[i];
        else
          for (long long i = 0; i < n; ++i) bn->grad[0] -= yn->grad[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  auto mode = detail::binary_mode(a, b);
  Tensor<Real> y(a.shape());
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* py = y.data();
  long long n = a.size();
  if (mode == detail::Bcast::same)
    for (long long i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
  else
    for (long long i = 0; i < n; ++i) py[i] = pa[i] * pb[0];
  if (detail::tracing<Real>({&a, &b})) {
    detail::mark_out(y);
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, bn, yn, mode, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        if (mode == detail::Bcast::same)
          for (long long i = 0; i < n; ++i) an->grad[i] += yn->grad[i] * bn->value[i];
        else
          for (long long i = 0; i < n; ++i) an->grad[i] += yn->grad[i] * bn->value[0];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        if (mode == detail::Bcast::same)
          for (long long i = 0; i < n; ++i) bn->grad[i] += yn->grad[i] * an->value[i];
        else
          for (long long i = 0; i < n; ++i) bn->grad[0] += yn->grad[i] * an->value[i];
      }
    });
  }
  return y;
}

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, Real s) {
  return add(a, Tensor<Real>::scalar(s));
}
template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, Real s) {
  return sub(a, Tensor<Real>::scalar(s));
}
template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, Real s) {
  return mul(a, Tensor<Real>::scalar(s));
}

namespace detail {

template <class Real, class Fwd, class Bwd>
Tensor<Real> unary_op(const Tensor<Real>& a, Fwd fwd, Bwd dfdx_from_xy) {
  Tensor<Real> y(a.shape());
  const Real* pa = a.data();
  Real* py = y.data();
  long long n = a.size();
  for (long long i = 0; i < n; ++i) py[i] = fwd(pa[i]);
  if (tracing<Real>({&a})) {
    mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, dfdx_from_xy, n] {
      an->ensure_grad();
      for (long long i = 0; i < n; ++i)
        an->grad[i] += yn->grad[i] * dfdx_from_xy(an->value[i], yn->value[i]);
    });
  }
  return y;
}

}  // namespace detail

template <class Real>
Tensor<Real> relu(const Tensor<Real>& a) {
  return detail::unary_op(
      a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& a) {
  return detail::unary_op(
      a,
      [](Real x) {
        // split on sign to avoid exp overflow
        if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
        Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

template <class Real>
Tensor<Real> tanh(const Tensor<Real>& a) {
  return detail::unary_op(
      a, [](Real x) { return std::tanh(x); },
      [](Real, Real y) { return Real(1) - y * y; });
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& a) {
  for (long long i = 0; i < a.size(); ++i)
    if (!(a[i] > Real(0))) throw DomainError("log of non-positive input");
  return detail::unary_op(
      a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

/// Elementwise power with a fixed real exponent.
template <class Real>
Tensor<Real> pow(const Tensor<Real>& a, Real e) {
  Tensor<Real> y(a.shape());
  const Real* pa = a.data();
  Real* py = y.data();
  long long n = a.size();
  for (long long i = 0; i < n; ++i) py[i] = std::pow(pa[i], e);
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, e, n] {
      an->ensure_grad();
      for (long long i = 0; i < n; ++i)
        an->grad[i] += yn->grad[i] * e * std::pow(an->value[i], e - Real(1));
    });
  }
  return y;
}

template <class Real>
Tensor<Real> neg(const Tensor<Real>& a) {
  return detail::unary_op(
      a, [](Real x) { return -x; }, [](Real, Real) { return Real(-1); });
}

/// Clamp to [lo, hi]; the subgradient is zero outside the open interval.
template <class Real>
Tensor<Real> clamp(const Tensor<Real>& a, Real lo, Real hi) {
  return detail::unary_op(
      a, [lo, hi](Real x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](Real x, Real) { return (x > lo && x < hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real s = Real(0);
  for (long long i = 0; i < a.size(); ++i) s += a[i];
  Tensor<Real> y = Tensor<Real>::scalar(s);
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    long long n = a.size();
    Tape<Real>::active()->record(yn, [an, yn, n] {
      an->ensure_grad();
      for (long long i = 0; i < n; ++i) an->grad[i] += yn->grad[0];
    });
  }
  return y;
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  Real s = Real(0);
  for (long long i = 0; i < a.size(); ++i) s += a[i];
  long long n = a.size();
  Tensor<Real> y = Tensor<Real>::scalar(s / Real(n));
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, n] {
      an->ensure_grad();
      Real g = yn->grad[0] / Real(n);
      for (long long i = 0; i < n; ++i) an->grad[i] += g;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape ops (channel-major 3-D tensors C x H x W unless noted)
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> concat_channels(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  int h = parts[0].dim(1), w = parts[0].dim(2);
  int ctot = 0;
  for (auto& p : parts) {
    if (p.rank() != 3 || p.dim(1) != h || p.dim(2) != w)
      throw ShapeError("concat operands disagree on spatial extent");
    ctot += p.dim(0);
  }
  Tensor<Real> y(Shape{ctot, h, w});
  long long plane = (long long)h * w;
  long long off = 0;
  for (auto& p : parts) {
    std::copy(p.data(), p.data() + p.size(), y.data() + off);
    off += p.size();
  }
  bool any = false;
  for (auto& p : parts) any = any || p.requires_grad();
  if (Tape<Real>::active() && any) {
    detail::mark_out(y);
    std::vector<typename Tensor<Real>::NodePtr> ins;
    for (auto& p : parts) ins.push_back(p.node());
    auto yn = y.node();
    Tape<Real>::active()->record(yn, [ins, yn, plane] {
      long long off2 = 0;
      for (auto& in : ins) {
        long long n = (long long)in->value.size();
        if (in->requires_grad) {
          in->ensure_grad();
          for (long long i = 0; i < n; ++i) in->grad[i] += yn->grad[off2 + i];
        }
        off2 += n;
      }
      (void)plane;
    });
  }
  return y;
}

template <class Real>
Tensor<Real> narrow_channels(const Tensor<Real>& a, int c0, int len) {
  if (a.rank() != 3) throw ShapeError("narrow_channels expects rank-3 input");
  if (c0 < 0 || len <= 0 || c0 + len > a.dim(0)) throw ShapeError("narrow_channels range");
  long long plane = (long long)a.dim(1) * a.dim(2);
  Tensor<Real> y(Shape{len, a.dim(1), a.dim(2)});
  std::copy(a.data() + c0 * plane, a.data() + (c0 + len) * plane, y.data());
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, c0, plane, len] {
      an->ensure_grad();
      for (long long i = 0; i < len * plane; ++i) an->grad[c0 * plane + i] += yn->grad[i];
    });
  }
  return y;
}

template <class Real>
Tensor<Real> narrow_1d(const Tensor<Real>& a, int start, int len) {
  if (a.rank() != 1) throw ShapeError("narrow_1d expects rank-1 input");
  if (start < 0 || len <= 0 || start + len > a.dim(0)) throw ShapeError("narrow_1d range");
  Tensor<Real> y(Shape{len});
  std::copy(a.data() + start, a.data() + start + len, y.data());
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, start, len] {
      an->ensure_grad();
      for (int i = 0; i < len; ++i) an->grad[(size_t)(start + i)] += yn->grad[(size_t)i];
    });
  }
  return y;
}

/// Extract spatial row i as a rank-2 tensor C x W.
template <class Real>
Tensor<Real> slice_row(const Tensor<Real>& a, int i) {
  if (a.rank() != 3) throw ShapeError("slice_row expects rank-3 input");
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (i < 0 || i >= h) throw ShapeError("slice_row index");
  Tensor<Real> y(Shape{c, w});
  for (int cc = 0; cc < c; ++cc)
    std::copy(a.data() + ((long long)cc * h + i) * w, a.data() + ((long long)cc * h + i) * w + w,
              y.data() + (long long)cc * w);
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, c, h, w, i] {
      an->ensure_grad();
      for (int cc = 0; cc < c; ++cc)
        for (int x = 0; x < w; ++x)
          an->grad[((long long)cc * h + i) * w + x] += yn->grad[(long long)cc * w + x];
    });
  }
  return y;
}

/// Extract spatial column j as a rank-2 tensor C x H.
template <class Real>
Tensor<Real> slice_col(const Tensor<Real>& a, int j) {
  if (a.rank() != 3) throw ShapeError("slice_col expects rank-3 input");
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (j < 0 || j >= w) throw ShapeError("slice_col index");
  Tensor<Real> y(Shape{c, h});
  for (int cc = 0; cc < c; ++cc)
    for (int yy = 0; yy < h; ++yy)
      y.data()[(long long)cc * h + yy] = a.data()[((long long)cc * h + yy) * w + j];
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, c, h, w, j] {
      an->ensure_grad();
      for (int cc = 0; cc < c; ++cc)
        for (int yy = 0; yy < h; ++yy)
          an->grad[((long long)cc * h + yy) * w + j] += yn->grad[(long long)cc * h + yy];
    });
  }
  return y;
}

/// Stack H row slices (each C x W) back into C x H x W.
template <class Real>
Tensor<Real> stack_rows(const std::vector<Tensor<Real>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows of zero slices");
  int c = rows[0].dim(0), w = rows[0].dim(1), h = (int)rows.size();
  Tensor<Real> y(Shape{c, h, w});
  for (int i = 0; i < h; ++i) {
    if (rows[(size_t)i].rank() != 2 || rows[(size_t)i].dim(0) != c || rows[(size_t)i].dim(1) != w)
      throw ShapeError("stack_rows slice shape mismatch");
    for (int cc = 0; cc < c; ++cc)
      std::copy(rows[(size_t)i].data() + (long long)cc * w, rows[(size_t)i].data() + (long long)cc * w + w,
                y.data() + ((long long)cc * h + i) * w);
  }
  bool any = false;
  for (auto& r : rows) any = any || r.requires_grad();
  if (Tape<Real>::active() && any) {
    detail::mark_out(y);
    std::vector<typename Tensor<Real>::NodePtr> ins;
    for (auto& r : rows) ins.push_back(r.node());
    auto yn = y.node();
    Tape<Real>::active()->record(yn, [ins, yn, c, h, w] {
      for (int i = 0; i < h; ++i) {
        auto& in = ins[(size_t)i];
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (int cc = 0; cc < c; ++cc)
          for (int x = 0; x < w; ++x)
            in->grad[(long long)cc * w + x] += yn->grad[((long long)cc * h + i) * w + x];
      }
    });
  }
  return y;
}

/// Stack W column slices (each C x H) back into C x H x W.
template <class Real>
Tensor<Real> stack_cols(const std::vector<Tensor<Real>>& cols) {
  if (cols.empty()) throw ShapeError("stack_cols of zero slices");
  int c = cols[0].dim(0), h = cols[0].dim(1), w = (int)cols.size();
  Tensor<Real> y(Shape{c, h, w});
  for (int j = 0; j < w; ++j) {
    if (cols[(size_t)j].rank() != 2 || cols[(size_t)j].dim(0) != c || cols[(size_t)j].dim(1) != h)
      throw ShapeError("stack_cols slice shape mismatch");
    for (int cc = 0; cc < c; ++cc)
      for (int yy = 0; yy < h; ++yy)
        y.data()[((long long)cc * h + yy) * w + j] = cols[(size_t)j].data()[(long long)cc * h + yy];
  }
  bool any = false;
  for (auto& col : cols) any = any || col.requires_grad();
  if (Tape<Real>::active() && any) {
    detail::mark_out(y);
    std::vector<typename Tensor<Real>::NodePtr> ins;
    for (auto& col : cols) ins.push_back(col.node());
    auto yn = y.node();
    Tape<Real>::active()->record(yn, [ins, yn, c, h, w] {
      for (int j = 0; j < w; ++j) {
        auto& in = ins[(size_t)j];
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (int cc = 0; cc < c; ++cc)
          for (int yy = 0; yy < h; ++yy)
            in->grad[(long long)cc * h + yy] += yn->grad[((long long)cc * h + yy) * w + j];
      }
    });
  }
  return y;
}

/// Per-channel spatial mean: C x H x W -> C.
template <class Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& a) {
  if (a.rank() != 3) throw ShapeError("global_avg_pool expects rank-3 input");
  int c = a.dim(0);
  long long plane = (long long)a.dim(1) * a.dim(2);
  Tensor<Real> y(Shape{c});
  for (int cc = 0; cc < c; ++cc) {
    Real s = Real(0);
    const Real* p = a.data() + cc * plane;
    for (long long i = 0; i < plane; ++i) s += p[i];
    y.data()[cc] = s / Real(plane);
  }
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, c, plane] {
      an->ensure_grad();
      for (int cc = 0; cc < c; ++cc) {
        Real g = yn->grad[(size_t)cc] / Real(plane);
        for (long long i = 0; i < plane; ++i) an->grad[cc * plane + i] += g;
      }
    });
  }
  return y;
}

/// y = W x + b for rank-1 x; W is M x N row-major, b is M.
template <class Real>
Tensor<Real> linear(const Tensor<Real>& w, const Tensor<Real>& x, const Tensor<Real>& b) {
  if (w.rank() != 2 || x.rank() != 1 || b.rank() != 1) throw ShapeError("linear expects W[MxN], x[N], b[M]");
  int m = w.dim(0), n = w.dim(1);
  if (x.dim(0) != n || b.dim(0) != m) throw ShapeError("linear operand extents");
  Tensor<Real> y(Shape{m});
  for (int i = 0; i < m; ++i) {
    Real s = b[(long long)i];
    const Real* wr = w.data() + (long long)i * n;
    for (int j = 0; j < n; ++j) s += wr[j] * x[(long long)j];
    y.data()[i] = s;
  }
  if (detail::tracing<Real>({&w, &x, &b})) {
    detail::mark_out(y);
    auto wn = w.node(), xn = x.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [wn, xn, bn, yn, m, n] {
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) wn->grad[(long long)i * n + j] += yn->grad[(size_t)i] * xn->value[(size_t)j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) xn->grad[(size_t)j] += yn->grad[(size_t)i] * wn->value[(long long)i * n + j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < m; ++i) bn->grad[(size_t)i] += yn->grad[(size_t)i];
      }
    });
  }
  return y;
}

/// Multiply each channel plane by a per-channel gate: y[c,:,:] = x[c,:,:] * g[c].
template <class Real>
Tensor<Real> scale_channels(const Tensor<Real>& x, const Tensor<Real>& g) {
  if (x.rank() != 3 || g.rank() != 1 || g.dim(0) != x.dim(0))
    throw ShapeError("scale_channels expects x[CxHxW], g[C]");
  int c = x.dim(0);
  long long plane = (long long)x.dim(1) * x.dim(2);
  Tensor<Real> y(x.shape());
  for (int cc = 0; cc < c; ++cc) {
    Real gv = g[(long long)cc];
    const Real* px = x.data() + cc * plane;
    Real* py = y.data() + cc * plane;
    for (long long i = 0; i < plane; ++i) py[i] = px[i] * gv;
  }
  if (detail::tracing<Real>({&x, &g})) {
    detail::mark_out(y);
    auto xn = x.node(), gn = g.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, gn, yn, c, plane] {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int cc = 0; cc < c; ++cc) {
          Real gv = gn->value[(size_t)cc];
          for (long long i = 0; i < plane; ++i) xn->grad[cc * plane + i] += yn->grad[cc * plane + i] * gv;
        }
      }
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int cc = 0; cc < c; ++cc) {
          Real s = Real(0);
          for (long long i = 0; i < plane; ++i) s += yn->grad[cc * plane + i] * xn->value[cc * plane + i];
          gn->grad[(size_t)cc] += s;
        }
      }
    });
  }
  return y;
}

/// Multiply every channel by a shared spatial map: y[c,p] = x[c,p] * m[p].
/// The map may be H x W or 1 x H x W.
template <class Real>
Tensor<Real> scale_map(const Tensor<Real>& x, const Tensor<Real>& m) {
  if (x.rank() != 3) throw ShapeError("scale_map expects rank-3 x");
  long long plane = (long long)x.dim(1) * x.dim(2);
  if (m.size() != plane) throw ShapeError("scale_map map extent mismatch");
  int c = x.dim(0);
  Tensor<Real> y(x.shape());
  for (int cc = 0; cc < c; ++cc) {
    const Real* px = x.data() + cc * plane;
    Real* py = y.data() + cc * plane;
    for (long long i = 0; i < plane; ++i) py[i] = px[i] * m.data()[i];
  }
  if (detail::tracing<Real>({&x, &m})) {
    detail::mark_out(y);
    auto xn = x.node(), mn = m.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, mn, yn, c, plane] {
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (int cc = 0; cc < c; ++cc)
          for (long long i = 0; i < plane; ++i)
            xn->grad[cc * plane + i] += yn->grad[cc * plane + i] * mn->value[(size_t)i];
      }
      if (mn->requires_grad) {
        mn->ensure_grad();
        for (long long i = 0; i < plane; ++i) {
          Real s = Real(0);
          for (int cc = 0; cc < c; ++cc) s += yn->grad[cc * plane + i] * xn->value[cc * plane + i];
          mn->grad[(size_t)i] += s;
        }
      }
    });
  }
  return y;
}

/// Per-pixel softmax over the channel axis of a C x H x W tensor, stabilized
/// by max subtraction.
template <class Real>
Tensor<Real> softmax_channels(const Tensor<Real>& a) {
  if (a.rank() != 3) throw ShapeError("softmax_channels expects rank-3 input");
  if (!a.all_finite()) throw NumericError("softmax input is not finite");
  int c = a.dim(0);
  long long plane = (long long)a.dim(1) * a.dim(2);
  Tensor<Real> y(a.shape());
  for (long long p = 0; p < plane; ++p) {
    Real mx = a.data()[p];
    for (int cc = 1; cc < c; ++cc) mx = std::max(mx, a.data()[cc * plane + p]);
    Real z = Real(0);
    for (int cc = 0; cc < c; ++cc) {
      Real e = std::exp(a.data()[cc * plane + p] - mx);
      y.data()[cc * plane + p] = e;
      z += e;
    }
    for (int cc = 0; cc < c; ++cc) y.data()[cc * plane + p] /= z;
  }
  if (detail::tracing<Real>({&a})) {
    detail::mark_out(y);
    auto an = a.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [an, yn, c, plane] {
      an->ensure_grad();
      for (long long p = 0; p < plane; ++p) {
        Real dot = Real(0);
        for (int cc = 0; cc < c; ++cc) dot += yn->grad[cc * plane + p] * yn->value[cc * plane + p];
        for (int cc = 0; cc < c; ++cc)
          an->grad[cc * plane + p] += yn->value[cc * plane + p] * (yn->grad[cc * plane + p] - dot);
      }
    });
  }
  return y;
}

}  // namespace laneforge
