#pragma once

// Differentiable primitives on Tensor<T>: elementwise arithmetic, axis
// reductions, shape surgery, matmul, softmax, layer norm, and the fused loss
// kernels used by the training objectives.

#include <cmath>
#include <cstdint>
#include <limits>

#include "clim/tensor.hpp"

namespace clim {

namespace detail {

inline void require_same_shape(const char* opname, const Shape& a, const Shape& b) {
  if (a != b)
    throw ShapeError(std::string(opname) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

inline void require_axis(const char* opname, const Shape& s, int axis) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError(std::string(opname) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
}

// (outer, n, inner) decomposition around one axis of a row-major shape.
struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit axis_split(const Shape& s, int axis) {
  AxisSplit a{1, static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]), 1};
  for (int i = 0; i < axis; ++i) a.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
    a.inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops (identical shapes)
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> ew_binary(const char* opname, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, Bwd bwd) {
  detail::require_same_shape(opname, a.shape(), b.shape());
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  const T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
  return make_result<T>(
      opname, a.shape(), std::move(out), {a, b},
      [bwd](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& ta = node.inputs[0];
        auto& tb = node.inputs[1];
        const T* pa = ta.raw();
        const T* pb = tb.raw();
        const T* po = node.owner->data.data();
        std::vector<T>* ga = detail::grad_sink(ta);
        std::vector<T>* gb = detail::grad_sink(tb);
        for (std::size_t i = 0; i < gout.size(); ++i) {
          T da, db;
          bwd(pa[i], pb[i], po[i], da, db);
          if (ga) (*ga)[i] += gout[i] * da;
          if (gb) (*gb)[i] += gout[i] * db;
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](T, T, T, T& da, T& db) { da = T(1); db = T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](T, T, T, T& da, T& db) { da = T(1); db = T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T, T& da, T& db) { da = y; db = x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T, T& da, T& db) { da = T(1) / y; db = -x / (y * y); });
}

// Ties route the gradient to the first operand.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "minimum", a, b, [](T x, T y) { return x <= y ? x : y; },
      [](T x, T y, T, T& da, T& db) { da = x <= y ? T(1) : T(0); db = T(1) - da; });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  return ew_binary<T>(
      "maximum", a, b, [](T x, T y) { return x >= y ? x : y; },
      [](T x, T y, T, T& da, T& db) { da = x >= y ? T(1) : T(0); db = T(1) - da; });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> ew_unary(const char* opname, const Tensor<T>& a, Fwd fwd, Bwd bwd) {
  const std::size_t n = a.numel();
  std::vector<T> out(n);
  const T* pa = a.raw();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
  return make_result<T>(
      opname, a.shape(), std::move(out), {a},
      [bwd](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& ta = node.inputs[0];
        std::vector<T>* ga = detail::grad_sink(ta);
        if (!ga) return;
        const T* pa = ta.raw();
        const T* po = node.owner->data.data();
        for (std::size_t i = 0; i < gout.size(); ++i) (*ga)[i] += gout[i] * bwd(pa[i], po[i]);
      });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return ew_unary<T>("neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

// Subgradient at 0 is 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  return ew_unary<T>(
      "abs", a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return ew_unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return ew_unary<T>("log", a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return ew_unary<T>(
      "sigmoid", a,
      [](T x) { return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return ew_unary<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return ew_unary<T>("scale", a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return ew_unary<T>("add_scalar", a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Broadcast against a 1-D vector along one axis
// ---------------------------------------------------------------------------

template <typename T>
void check_vec_broadcast(const char* opname, const Tensor<T>& x, const Tensor<T>& v, int axis) {
  detail::require_axis(opname, x.shape(), axis);
  if (v.ndim() != 1 || v.extent(0) != x.extent(axis))
    throw ShapeError(std::string(opname) + ": broadcast mismatch, vector " + shape_str(v.shape()) +
                     " against axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
}

template <typename T>
Tensor<T> mul_vec(const Tensor<T>& x, const Tensor<T>& v, int axis) {
  check_vec_broadcast("mul_vec", x, v, axis);
  const auto sp = detail::axis_split(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  const T* pv = v.raw();
  std::size_t idx = 0;
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k) {
      const T w = pv[k];
      for (std::size_t i = 0; i < sp.inner; ++i, ++idx) out[idx] = px[idx] * w;
    }
  return make_result<T>(
      "mul_vec", x.shape(), std::move(out), {x, v},
      [sp](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tv = node.inputs[1];
        const T* px = tx.raw();
        const T* pv = tv.raw();
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gv = detail::grad_sink(tv);
        std::size_t idx = 0;
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.n; ++k) {
            T acc = T(0);
            for (std::size_t i = 0; i < sp.inner; ++i, ++idx) {
              if (gx) (*gx)[idx] += gout[idx] * pv[k];
              acc += gout[idx] * px[idx];
            }
            if (gv) (*gv)[k] += acc;
          }
      });
}

template <typename T>
Tensor<T> add_vec(const Tensor<T>& x, const Tensor<T>& v, int axis) {
  check_vec_broadcast("add_vec", x, v, axis);
  const auto sp = detail::axis_split(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  const T* pv = v.raw();
  std::size_t idx = 0;
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i, ++idx) out[idx] = px[idx] + pv[k];
  return make_result<T>(
      "add_vec", x.shape(), std::move(out), {x, v},
      [sp](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        std::vector<T>* gv = detail::grad_sink(node.inputs[1]);
        std::size_t idx = 0;
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.n; ++k) {
            T acc = T(0);
            for (std::size_t i = 0; i < sp.inner; ++i, ++idx) {
              if (gx) (*gx)[idx] += gout[idx];
              acc += gout[idx];
            }
            if (gv) (*gv)[k] += acc;
          }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceMode { Sum, Mean, Max };

// Collapses the given axes (removed from the result shape). Max ties resolve
// to the first element in row-major order.
template <typename T>
Tensor<T> reduce_axes(const Tensor<T>& x, const std::vector<int>& axes, ReduceMode mode) {
  const Shape& xs = x.shape();
  std::vector<char> dropped(xs.size(), 0);
  for (int a : axes) {
    detail::require_axis("reduce_axes", xs, a);
    if (dropped[static_cast<std::size_t>(a)]) throw ShapeError("reduce_axes: duplicate axis");
    dropped[static_cast<std::size_t>(a)] = 1;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!dropped[i]) out_shape.push_back(xs[i]);
  if (out_shape.empty()) out_shape = {1};

  // Row-major strides of x, plus the flattened output index for each element.
  const std::size_t n = x.numel();
  std::vector<std::size_t> xstride(xs.size(), 1);
  for (int i = static_cast<int>(xs.size()) - 2; i >= 0; --i)
    xstride[static_cast<std::size_t>(i)] =
        xstride[static_cast<std::size_t>(i) + 1] * static_cast<std::size_t>(xs[static_cast<std::size_t>(i) + 1]);
  std::vector<std::size_t> ostride_for_axis(xs.size(), 0);
  {
    std::size_t run = 1;
    for (int i = static_cast<int>(xs.size()) - 1; i >= 0; --i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!dropped[ui]) {
        ostride_for_axis[ui] = run;
        run *= static_cast<std::size_t>(xs[ui]);
      }
    }
  }

  const std::size_t out_n = shape_numel(out_shape);
  const std::size_t pooled = n / out_n;
  if (pooled == 0) throw ShapeError("reduce_axes: empty pooled region");
  const T* px = x.raw();
  std::vector<T> out(out_n, mode == ReduceMode::Max ? -std::numeric_limits<T>::infinity() : T(0));
  std::vector<std::int64_t> argmax;
  if (mode == ReduceMode::Max) argmax.assign(out_n, -1);

  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t rem = flat, oidx = 0;
    for (std::size_t d = 0; d < xs.size(); ++d) {
      const std::size_t c = rem / xstride[d];
      rem %= xstride[d];
      if (!dropped[d]) oidx += c * ostride_for_axis[d];
    }
    if (mode == ReduceMode::Max) {
      if (px[flat] > out[oidx]) {
        out[oidx] = px[flat];
        argmax[oidx] = static_cast<std::int64_t>(flat);
      }
    } else {
      out[oidx] += px[flat];
    }
  }
  if (mode == ReduceMode::Mean)
    for (T& v : out) v /= static_cast<T>(pooled);

  return make_result<T>(
      "reduce_axes", std::move(out_shape), std::move(out), {x},
      [mode, pooled, xstride, ostride_for_axis, dropped, argmax](typename Tensor<T>::Node& node,
                                                                 const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        if (mode == ReduceMode::Max) {
          for (std::size_t o = 0; o < gout.size(); ++o)
            if (argmax[o] >= 0) (*gx)[static_cast<std::size_t>(argmax[o])] += gout[o];
          return;
        }
        const T s = mode == ReduceMode::Mean ? T(1) / static_cast<T>(pooled) : T(1);
        const std::size_t n = gx->size();
        for (std::size_t flat = 0; flat < n; ++flat) {
          std::size_t rem = flat, oidx = 0;
          for (std::size_t d = 0; d < xstride.size(); ++d) {
            const std::size_t c = rem / xstride[d];
            rem %= xstride[d];
            if (!dropped[d]) oidx += c * ostride_for_axis[d];
          }
          (*gx)[flat] += gout[oidx] * s;
        }
      });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.ndim()));
  for (int i = 0; i < x.ndim(); ++i) axes[static_cast<std::size_t>(i)] = i;
  return reduce_axes(x, axes, ReduceMode::Sum);
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x) {
  std::vector<int> axes(static_cast<std::size_t>(x.ndim()));
  for (int i = 0; i < x.ndim(); ++i) axes[static_cast<std::size_t>(i)] = i;
  return reduce_axes(x, axes, ReduceMode::Mean);
}

enum class PoolMode { Avg, Max };
enum class PoolAxes { Spatial, Spatiotemporal };

// Global pooling over a (C,T,H,W) clip. Spatial pooling keeps (C,T);
// spatiotemporal pooling keeps (C).
template <typename T>
Tensor<T> pool_global(const Tensor<T>& x, PoolMode mode, PoolAxes axes) {
  if (x.ndim() != 4) throw ShapeError("pool_global: expected rank-4 clip, got " + shape_str(x.shape()));
  const std::vector<int> ax = axes == PoolAxes::Spatial ? std::vector<int>{2, 3} : std::vector<int>{1, 2, 3};
  return reduce_axes(x, ax, mode == PoolMode::Avg ? ReduceMode::Mean : ReduceMode::Max);
}

// ---------------------------------------------------------------------------
// Shape surgery
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  validate_shape(new_shape);
  if (shape_numel(new_shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
  std::vector<T> out(x.raw(), x.raw() + x.numel());
  return make_result<T>(
      "reshape", std::move(new_shape), std::move(out), {x},
      [](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        for (std::size_t i = 0; i < gout.size(); ++i) (*gx)[i] += gout[i];
      });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.ndim() != 2) throw ShapeError("transpose2d: expected rank-2 tensor, got " + shape_str(x.shape()));
  const int r = x.extent(0), c = x.extent(1);
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)] =
          px[static_cast<std::size_t>(i) * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)];
  return make_result<T>(
      "transpose2d", {c, r}, std::move(out), {x},
      [r, c](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            (*gx)[static_cast<std::size_t>(i) * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)] +=
                gout[static_cast<std::size_t>(j) * static_cast<std::size_t>(r) + static_cast<std::size_t>(i)];
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  detail::require_axis("concat", s0, axis);
  int total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != static_cast<int>(s0.size())) throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < p.ndim(); ++d)
      if (d != axis && p.extent(d) != s0[static_cast<std::size_t>(d)])
        throw ShapeError("concat: extent mismatch outside axis " + std::to_string(axis));
    total += p.extent(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = total;
  const auto sp = detail::axis_split(out_shape, axis);
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;  // start along axis, per part
  {
    std::size_t off = 0;
    for (const auto& p : parts) {
      offsets.push_back(off);
      const std::size_t pn = static_cast<std::size_t>(p.extent(axis));
      const T* pp = p.raw();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t k = 0; k < pn; ++k)
          for (std::size_t i = 0; i < sp.inner; ++i)
            out[(o * sp.n + off + k) * sp.inner + i] = pp[(o * pn + k) * sp.inner + i];
      off += pn;
    }
  }
  return make_result<T>(
      "concat", std::move(out_shape), std::move(out), parts,
      [sp, offsets](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        for (std::size_t pi = 0; pi < node.inputs.size(); ++pi) {
          auto& p = node.inputs[pi];
          std::vector<T>* gp = detail::grad_sink(p);
          if (!gp) continue;
          const std::size_t axis_n = gp->size() / (sp.outer * sp.inner);
          const std::size_t off = offsets[pi];
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t k = 0; k < axis_n; ++k)
              for (std::size_t i = 0; i < sp.inner; ++i)
                (*gp)[(o * axis_n + k) * sp.inner + i] += gout[(o * sp.n + off + k) * sp.inner + i];
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int start, int len) {
  detail::require_axis("slice", x.shape(), axis);
  const int ext = x.extent(axis);
  if (start < 0 || len <= 0 || start + len > ext) throw ShapeError("slice: range out of bounds");
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  const auto sp = detail::axis_split(x.shape(), axis);
  std::vector<T> out(shape_numel(out_shape));
  const T* px = x.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (int k = 0; k < len; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i)
        out[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(k)) * sp.inner + i] =
            px[(o * sp.n + static_cast<std::size_t>(start + k)) * sp.inner + i];
  return make_result<T>(
      "slice", std::move(out_shape), std::move(out), {x},
      [sp, start, len](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (int k = 0; k < len; ++k)
            for (std::size_t i = 0; i < sp.inner; ++i)
              (*gx)[(o * sp.n + static_cast<std::size_t>(start + k)) * sp.inner + i] +=
                  gout[(o * static_cast<std::size_t>(len) + static_cast<std::size_t>(k)) * sp.inner + i];
      });
}

// Row gather on a 2-D tensor; rows may repeat.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<int>& rows) {
  if (x.ndim() != 2) throw ShapeError("gather_rows: expected rank-2 tensor");
  const int r = x.extent(0), c = x.extent(1);
  for (int i : rows)
    if (i < 0 || i >= r) throw ShapeError("gather_rows: row index out of range");
  std::vector<T> out(rows.size() * static_cast<std::size_t>(c));
  const T* px = x.raw();
  for (std::size_t k = 0; k < rows.size(); ++k)
    std::copy_n(px + static_cast<std::size_t>(rows[k]) * static_cast<std::size_t>(c),
                static_cast<std::size_t>(c), out.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(c)));
  return make_result<T>(
      "gather_rows", {static_cast<int>(rows.size()), c}, std::move(out), {x},
      [rows, c](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        for (std::size_t k = 0; k < rows.size(); ++k)
          for (int j = 0; j < c; ++j)
            (*gx)[static_cast<std::size_t>(rows[k]) * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)] +=
                gout[k * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)];
      });
}

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false, bool trans_b = false) {
  if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: expected rank-2 tensors");
  const int m = trans_a ? a.extent(1) : a.extent(0);
  const int k = trans_a ? a.extent(0) : a.extent(1);
  const int kb = trans_b ? b.extent(1) : b.extent(0);
  const int n = trans_b ? b.extent(0) : b.extent(1);
  if (k != kb)
    throw ShapeError("matmul: inner extent mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

  std::vector<T> out(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), T(0));
  const T* pa = a.raw();
  const T* pb = b.raw();
  // i-k-j loop with contiguous inner accumulation for the common (no-trans) case.
  for (int i = 0; i < m; ++i) {
    T* po = out.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
    for (int kk = 0; kk < k; ++kk) {
      const T av = trans_a ? pa[static_cast<std::size_t>(kk) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)]
                           : pa[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(kk)];
      if (!trans_b) {
        const T* pbr = pb + static_cast<std::size_t>(kk) * static_cast<std::size_t>(n);
        for (int j = 0; j < n; ++j) po[j] += av * pbr[j];
      } else {
        for (int j = 0; j < n; ++j)
          po[j] += av * pb[static_cast<std::size_t>(j) * static_cast<std::size_t>(k) + static_cast<std::size_t>(kk)];
      }
    }
  }
  return make_result<T>(
      "matmul", {m, n}, std::move(out), {a, b},
      [m, n, k, trans_a, trans_b](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& ta = node.inputs[0];
        auto& tb = node.inputs[1];
        const T* pa = ta.raw();
        const T* pb = tb.raw();
        std::vector<T>* ga = detail::grad_sink(ta);
        std::vector<T>* gb = detail::grad_sink(tb);
        // dC[i,j] flows to A[i,k] (or A[k,i]) and B[k,j] (or B[j,k]).
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const T g = gout[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
            if (g == T(0)) continue;
            for (int kk = 0; kk < k; ++kk) {
              const std::size_t ai =
                  trans_a ? static_cast<std::size_t>(kk) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)
                          : static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(kk);
              const std::size_t bi =
                  trans_b ? static_cast<std::size_t>(j) * static_cast<std::size_t>(k) + static_cast<std::size_t>(kk)
                          : static_cast<std::size_t>(kk) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j);
              if (ga) (*ga)[ai] += g * pb[bi];
              if (gb) (*gb)[bi] += g * pa[ai];
            }
          }
      });
}

// ---------------------------------------------------------------------------
// Softmax / layer norm
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  detail::require_axis("softmax", x.shape(), axis);
  const auto sp = detail::axis_split(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* px = x.raw();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t kk = 0; kk < sp.n; ++kk) mx = std::max(mx, px[base + kk * sp.inner]);
      T den = T(0);
      for (std::size_t kk = 0; kk < sp.n; ++kk) {
        const T e = std::exp(px[base + kk * sp.inner] - mx);
        out[base + kk * sp.inner] = e;
        den += e;
      }
      for (std::size_t kk = 0; kk < sp.n; ++kk) out[base + kk * sp.inner] /= den;
    }
  return make_result<T>(
      "softmax", x.shape(), std::move(out), {x},
      [sp](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        const T* po = node.owner->data.data();
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.n * sp.inner + i;
            T dot = T(0);
            for (std::size_t kk = 0; kk < sp.n; ++kk) dot += gout[base + kk * sp.inner] * po[base + kk * sp.inner];
            for (std::size_t kk = 0; kk < sp.n; ++kk) {
              const std::size_t ii = base + kk * sp.inner;
              (*gx)[ii] += po[ii] * (gout[ii] - dot);
            }
          }
      });
}

// Per-row normalization over the last axis with learnable affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  if (x.ndim() < 1) throw ShapeError("layer_norm: rank-0 input");
  const int axis = x.ndim() - 1;
  check_vec_broadcast("layer_norm", x, gamma, axis);
  check_vec_broadcast("layer_norm", x, beta, axis);
  const auto sp = detail::axis_split(x.shape(), axis);  // inner == 1
  const std::size_t n = sp.n;
  std::vector<T> out(x.numel());
  std::vector<T> inv_sigma(sp.outer), mean(sp.outer);
  const T* px = x.raw();
  const T* pg = gamma.raw();
  const T* pb = beta.raw();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const T* row = px + o * n;
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    mean[o] = mu;
    inv_sigma[o] = is;
    T* orow = out.data() + o * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = (row[j] - mu) * is * pg[j] + pb[j];
  }
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [sp, mean, inv_sigma](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tg = node.inputs[1];
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gg = detail::grad_sink(tg);
        std::vector<T>* gb = detail::grad_sink(node.inputs[2]);
        const std::size_t n = sp.n;
        const T* px = tx.raw();
        const T* pg = tg.raw();
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const T* row = px + o * n;
          const T* grow = gout.data() + o * n;
          const T mu = mean[o], is = inv_sigma[o];
          if (gg || gb) {
            for (std::size_t j = 0; j < n; ++j) {
              const T xhat = (row[j] - mu) * is;
              if (gg) (*gg)[j] += grow[j] * xhat;
              if (gb) (*gb)[j] += grow[j];
            }
          }
          if (gx) {
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t j = 0; j < n; ++j) {
              const T gj = grow[j] * pg[j];
              const T xhat = (row[j] - mu) * is;
              sum_g += gj;
              sum_gx += gj * xhat;
            }
            const T inv_n = T(1) / static_cast<T>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T gj = grow[j] * pg[j];
              const T xhat = (row[j] - mu) * is;
              (*gx)[o * n + j] += is * (gj - inv_n * sum_g - xhat * inv_n * sum_gx);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Fused classification losses (numerically stable forms)
// ---------------------------------------------------------------------------

// Weighted multinomial cross entropy over the rows of (N,K) logits:
//   sum_i w_i * (logsumexp(x_i) - x_i[target_i]).
template <typename T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, const std::vector<int>& targets,
                             const std::vector<T>& row_weights) {
  if (logits.ndim() != 2) throw ShapeError("cross_entropy_rows: expected rank-2 logits");
  const int n = logits.extent(0), k = logits.extent(1);
  if (static_cast<int>(targets.size()) != n || static_cast<int>(row_weights.size()) != n)
    throw ShapeError("cross_entropy_rows: targets/weights length mismatch");
  for (int t : targets)
    if (t < 0 || t >= k) throw ShapeError("cross_entropy_rows: target class out of range");
  const T* px = logits.raw();
  T loss = T(0);
  for (int i = 0; i < n; ++i) {
    if (row_weights[static_cast<std::size_t>(i)] == T(0)) continue;
    const T* row = px + static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T den = T(0);
    for (int j = 0; j < k; ++j) den += std::exp(row[j] - mx);
    const T lse = mx + std::log(den);
    loss += row_weights[static_cast<std::size_t>(i)] * (lse - row[targets[static_cast<std::size_t>(i)]]);
  }
  return make_result<T>(
      "cross_entropy_rows", {1}, {loss}, {logits},
      [targets, row_weights, n, k](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        const T g = gout[0];
        const T* px = node.inputs[0].raw();
        for (int i = 0; i < n; ++i) {
          const T w = row_weights[static_cast<std::size_t>(i)];
          if (w == T(0)) continue;
          const T* row = px + static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
          T mx = row[0];
          for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
          T den = T(0);
          for (int j = 0; j < k; ++j) den += std::exp(row[j] - mx);
          for (int j = 0; j < k; ++j) {
            T p = std::exp(row[j] - mx) / den;
            if (j == targets[static_cast<std::size_t>(i)]) p -= T(1);
            (*gx)[static_cast<std::size_t>(i) * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] +=
                g * w * p;
          }
        }
      });
}

// Weighted binary cross entropy on logits:
//   sum_i w_i * (max(x,0) - x*t + log(1+exp(-|x|))).
template <typename T>
Tensor<T> bce_logits(const Tensor<T>& logits, const std::vector<T>& targets, const std::vector<T>& weights) {
  const std::size_t n = logits.numel();
  if (targets.size() != n || weights.size() != n)
    throw ShapeError("bce_logits: targets/weights length mismatch");
  const T* px = logits.raw();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == T(0)) continue;
    const T x = px[i];
    loss += weights[i] * (std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x))));
  }
  return make_result<T>(
      "bce_logits", {1}, {loss}, {logits},
      [targets, weights](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        std::vector<T>* gx = detail::grad_sink(node.inputs[0]);
        if (!gx) return;
        const T g = gout[0];
        const T* px = node.inputs[0].raw();
        for (std::size_t i = 0; i < gx->size(); ++i) {
          if (weights[i] == T(0)) continue;
          const T x = px[i];
          const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
          (*gx)[i] += g * weights[i] * (s - targets[i]);
        }
      });
}

}  // namespace clim
