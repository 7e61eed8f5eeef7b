#pragma once

// Direct (im2col-free) convolution kernels over small clips and feature maps:
// grouped 3-D convolution, grouped 2-D convolution, transposed 3-D convolution,
// and depthwise cross-correlation. All are differentiable w.r.t. every input.

#include <array>

#include "clim/tensor.hpp"

namespace clim {

namespace detail {

inline int conv_out_dim(const char* opname, int in, int k, int stride, int pad) {
  if (stride < 1) throw GeometryError(std::string(opname) + ": stride must be >= 1");
  if (pad < 0) throw GeometryError(std::string(opname) + ": negative padding");
  const int span = in + 2 * pad - k;
  if (span < 0)
    throw GeometryError(std::string(opname) + ": kernel " + std::to_string(k) + " exceeds padded extent " +
                        std::to_string(in + 2 * pad));
  return span / stride + 1;
}

inline void check_groups(const char* opname, int c_in, int c_out, int groups, int w_cin) {
  if (groups < 1 || c_in % groups != 0 || c_out % groups != 0)
    throw GeometryError(std::string(opname) + ": groups=" + std::to_string(groups) + " does not divide channels (" +
                        std::to_string(c_in) + " in, " + std::to_string(c_out) + " out)");
  if (w_cin != c_in / groups)
    throw GeometryError(std::string(opname) + ": weight expects " + std::to_string(w_cin) +
                        " channels per group, input provides " + std::to_string(c_in / groups));
}

template <typename T>
void check_bias(const char* opname, const Tensor<T>& bias, int c_out) {
  if (!bias.defined()) return;
  if (bias.ndim() != 1 || bias.extent(0) != c_out)
    throw ShapeError(std::string(opname) + ": bias must have shape (" + std::to_string(c_out) + ")");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv3d: x (C_in, T, H, W), w (C_out, C_in/groups, kT, kH, kW), bias (C_out)
// or undefined. Output extent per axis: (in + 2*pad - k) / stride + 1.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::array<int, 3> stride,
                 std::array<int, 3> pad, int groups = 1) {
  if (x.ndim() != 4) throw ShapeError("conv3d: input must be (C,T,H,W), got " + shape_str(x.shape()));
  if (w.ndim() != 5) throw ShapeError("conv3d: weight must be rank-5, got " + shape_str(w.shape()));
  const int ci_n = x.extent(0), t_in = x.extent(1), h_in = x.extent(2), w_in = x.extent(3);
  const int co_n = w.extent(0), cg = w.extent(1), kt = w.extent(2), kh = w.extent(3), kw = w.extent(4);
  detail::check_groups("conv3d", ci_n, co_n, groups, cg);
  detail::check_bias("conv3d", bias, co_n);
  const int t_out = detail::conv_out_dim("conv3d", t_in, kt, stride[0], pad[0]);
  const int h_out = detail::conv_out_dim("conv3d", h_in, kh, stride[1], pad[1]);
  const int w_out = detail::conv_out_dim("conv3d", w_in, kw, stride[2], pad[2]);
  const int co_per_g = co_n / groups;

  std::vector<T> out(static_cast<std::size_t>(co_n) * t_out * h_out * w_out);
  const T* px = x.raw();
  const T* pw = w.raw();
  const T* pb = bias.defined() ? bias.raw() : nullptr;
  std::size_t oi = 0;
  for (int co = 0; co < co_n; ++co) {
    const int ci0 = (co / co_per_g) * cg;
    const T* wc = pw + static_cast<std::size_t>(co) * cg * kt * kh * kw;
    for (int ot = 0; ot < t_out; ++ot)
      for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox, ++oi) {
          T acc = pb ? pb[co] : T(0);
          for (int c = 0; c < cg; ++c)
            for (int dt = 0; dt < kt; ++dt) {
              const int it = ot * stride[0] - pad[0] + dt;
              if (it < 0 || it >= t_in) continue;
              for (int dy = 0; dy < kh; ++dy) {
                const int iy = oy * stride[1] - pad[1] + dy;
                if (iy < 0 || iy >= h_in) continue;
                const T* xr = px + ((static_cast<std::size_t>(ci0 + c) * t_in + it) * h_in + iy) * w_in;
                const T* wr = wc + ((static_cast<std::size_t>(c) * kt + dt) * kh + dy) * kw;
                for (int dx = 0; dx < kw; ++dx) {
                  const int ix = ox * stride[2] - pad[2] + dx;
                  if (ix < 0 || ix >= w_in) continue;
                  acc += xr[ix] * wr[dx];
                }
              }
            }
          out[oi] = acc;
        }
  }

  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result<T>(
      "conv3d", {co_n, t_out, h_out, w_out}, std::move(out), std::move(inputs),
      [=](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tw = node.inputs[1];
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gw = detail::grad_sink(tw);
        std::vector<T>* gb = has_bias ? detail::grad_sink(node.inputs[2]) : nullptr;
        const T* px = tx.raw();
        const T* pw = tw.raw();
        std::size_t oi = 0;
        for (int co = 0; co < co_n; ++co) {
          const int ci0 = (co / co_per_g) * cg;
          const std::size_t wbase = static_cast<std::size_t>(co) * cg * kt * kh * kw;
          for (int ot = 0; ot < t_out; ++ot)
            for (int oy = 0; oy < h_out; ++oy)
              for (int ox = 0; ox < w_out; ++ox, ++oi) {
                const T g = gout[oi];
                if (g == T(0)) continue;
                if (gb) (*gb)[static_cast<std::size_t>(co)] += g;
                if (!gx && !gw) continue;
                for (int c = 0; c < cg; ++c)
                  for (int dt = 0; dt < kt; ++dt) {
                    const int it = ot * stride[0] - pad[0] + dt;
                    if (it < 0 || it >= t_in) continue;
                    for (int dy = 0; dy < kh; ++dy) {
                      const int iy = oy * stride[1] - pad[1] + dy;
                      if (iy < 0 || iy >= h_in) continue;
                      const std::size_t xrow = ((static_cast<std::size_t>(ci0 + c) * t_in + it) * h_in + iy) *
                                               static_cast<std::size_t>(w_in);
                      const std::size_t wrow = wbase + ((static_cast<std::size_t>(c) * kt + dt) * kh + dy) *
                                                           static_cast<std::size_t>(kw);
                      for (int dx = 0; dx < kw; ++dx) {
                        const int ix = ox * stride[2] - pad[2] + dx;
                        if (ix < 0 || ix >= w_in) continue;
                        if (gx) (*gx)[xrow + static_cast<std::size_t>(ix)] += g * pw[wrow + static_cast<std::size_t>(dx)];
                        if (gw) (*gw)[wrow + static_cast<std::size_t>(dx)] += g * px[xrow + static_cast<std::size_t>(ix)];
                      }
                    }
                  }
              }
        }
      });
}

// Spatial member of a 2+1D factorized convolution: kernel (C_out,C_in,1,kh,kw),
// time axis untouched.
template <typename T>
Tensor<T> conv_spatial(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::array<int, 2> stride,
                       std::array<int, 2> pad, int groups = 1) {
  if (w.ndim() != 5 || w.extent(2) != 1)
    throw ShapeError("conv_spatial: weight must be (C_out,C_in,1,kh,kw), got " + shape_str(w.shape()));
  return conv3d(x, w, bias, {1, stride[0], stride[1]}, {0, pad[0], pad[1]}, groups);
}

// Temporal member: kernel (C_out,C_in,kt,1,1), spatial extents untouched.
template <typename T>
Tensor<T> conv_temporal(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride_t, int pad_t) {
  if (w.ndim() != 5 || w.extent(3) != 1 || w.extent(4) != 1)
    throw ShapeError("conv_temporal: weight must be (C_out,C_in,kt,1,1), got " + shape_str(w.shape()));
  return conv3d(x, w, bias, {stride_t, 1, 1}, {pad_t, 0, 0});
}

// ---------------------------------------------------------------------------
// conv2d: x (C_in, H, W), w (C_out, C_in/groups, kH, kW). Same stride/pad
// semantics as conv3d.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::array<int, 2> stride,
                 std::array<int, 2> pad, int groups = 1) {
  if (x.ndim() != 3) throw ShapeError("conv2d: input must be (C,H,W), got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw ShapeError("conv2d: weight must be rank-4, got " + shape_str(w.shape()));
  const int ci_n = x.extent(0), h_in = x.extent(1), w_in = x.extent(2);
  const int co_n = w.extent(0), cg = w.extent(1), kh = w.extent(2), kw = w.extent(3);
  detail::check_groups("conv2d", ci_n, co_n, groups, cg);
  detail::check_bias("conv2d", bias, co_n);
  const int h_out = detail::conv_out_dim("conv2d", h_in, kh, stride[0], pad[0]);
  const int w_out = detail::conv_out_dim("conv2d", w_in, kw, stride[1], pad[1]);
  const int co_per_g = co_n / groups;

  std::vector<T> out(static_cast<std::size_t>(co_n) * h_out * w_out);
  const T* px = x.raw();
  const T* pw = w.raw();
  const T* pb = bias.defined() ? bias.raw() : nullptr;
  std::size_t oi = 0;
  for (int co = 0; co < co_n; ++co) {
    const int ci0 = (co / co_per_g) * cg;
    const T* wc = pw + static_cast<std::size_t>(co) * cg * kh * kw;
    for (int oy = 0; oy < h_out; ++oy)
      for (int ox = 0; ox < w_out; ++ox, ++oi) {
        T acc = pb ? pb[co] : T(0);
        for (int c = 0; c < cg; ++c)
          for (int dy = 0; dy < kh; ++dy) {
            const int iy = oy * stride[0] - pad[0] + dy;
            if (iy < 0 || iy >= h_in) continue;
            const T* xr = px + (static_cast<std::size_t>(ci0 + c) * h_in + iy) * w_in;
            const T* wr = wc + (static_cast<std::size_t>(c) * kh + dy) * kw;
            for (int dx = 0; dx < kw; ++dx) {
              const int ix = ox * stride[1] - pad[1] + dx;
              if (ix < 0 || ix >= w_in) continue;
              acc += xr[ix] * wr[dx];
            }
          }
        out[oi] = acc;
      }
  }

  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result<T>(
      "conv2d", {co_n, h_out, w_out}, std::move(out), std::move(inputs),
      [=](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tw = node.inputs[1];
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gw = detail::grad_sink(tw);
        std::vector<T>* gb = has_bias ? detail::grad_sink(node.inputs[2]) : nullptr;
        const T* px = tx.raw();
        const T* pw = tw.raw();
        std::size_t oi = 0;
        for (int co = 0; co < co_n; ++co) {
          const int ci0 = (co / co_per_g) * cg;
          const std::size_t wbase = static_cast<std::size_t>(co) * cg * kh * kw;
          for (int oy = 0; oy < h_out; ++oy)
            for (int ox = 0; ox < w_out; ++ox, ++oi) {
              const T g = gout[oi];
              if (g == T(0)) continue;
              if (gb) (*gb)[static_cast<std::size_t>(co)] += g;
              if (!gx && !gw) continue;
              for (int c = 0; c < cg; ++c)
                for (int dy = 0; dy < kh; ++dy) {
                  const int iy = oy * stride[0] - pad[0] + dy;
                  if (iy < 0 || iy >= h_in) continue;
                  const std::size_t xrow =
                      (static_cast<std::size_t>(ci0 + c) * h_in + iy) * static_cast<std::size_t>(w_in);
                  const std::size_t wrow =
                      wbase + (static_cast<std::size_t>(c) * kh + dy) * static_cast<std::size_t>(kw);
                  for (int dx = 0; dx < kw; ++dx) {
                    const int ix = ox * stride[1] - pad[1] + dx;
                    if (ix < 0 || ix >= w_in) continue;
                    if (gx) (*gx)[xrow + static_cast<std::size_t>(ix)] += g * pw[wrow + static_cast<std::size_t>(dx)];
                    if (gw) (*gw)[wrow + static_cast<std::size_t>(dx)] += g * px[xrow + static_cast<std::size_t>(ix)];
                  }
                }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// conv_transpose3d: x (C_in, T, H, W), w (C_in, C_out, kT, kH, kW). No
// padding; out extent per axis = (in - 1) * stride + k.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv_transpose3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::array<int, 3> stride) {
  if (x.ndim() != 4) throw ShapeError("conv_transpose3d: input must be (C,T,H,W), got " + shape_str(x.shape()));
  if (w.ndim() != 5) throw ShapeError("conv_transpose3d: weight must be rank-5, got " + shape_str(w.shape()));
  if (x.extent(0) != w.extent(0))
    throw GeometryError("conv_transpose3d: weight expects " + std::to_string(w.extent(0)) + " input channels, got " +
                        std::to_string(x.extent(0)));
  for (int s : stride)
    if (s < 1) throw GeometryError("conv_transpose3d: stride must be >= 1");
  const int ci_n = x.extent(0), t_in = x.extent(1), h_in = x.extent(2), w_in = x.extent(3);
  const int co_n = w.extent(1), kt = w.extent(2), kh = w.extent(3), kw = w.extent(4);
  detail::check_bias("conv_transpose3d", bias, co_n);
  const int t_out = (t_in - 1) * stride[0] + kt;
  const int h_out = (h_in - 1) * stride[1] + kh;
  const int w_out = (w_in - 1) * stride[2] + kw;

  std::vector<T> out(static_cast<std::size_t>(co_n) * t_out * h_out * w_out, T(0));
  const T* px = x.raw();
  const T* pw = w.raw();
  if (bias.defined()) {
    const T* pb = bias.raw();
    std::size_t i = 0;
    for (int co = 0; co < co_n; ++co) {
      const std::size_t n = static_cast<std::size_t>(t_out) * h_out * w_out;
      for (std::size_t j = 0; j < n; ++j, ++i) out[i] = pb[co];
    }
  }
  for (int ci = 0; ci < ci_n; ++ci)
    for (int it = 0; it < t_in; ++it)
      for (int iy = 0; iy < h_in; ++iy)
        for (int ix = 0; ix < w_in; ++ix) {
          const T v = px[((static_cast<std::size_t>(ci) * t_in + it) * h_in + iy) * w_in + ix];
          if (v == T(0)) continue;
          for (int co = 0; co < co_n; ++co) {
            const T* wr = pw + ((static_cast<std::size_t>(ci) * co_n + co) * kt) * kh * kw;
            for (int dt = 0; dt < kt; ++dt)
              for (int dy = 0; dy < kh; ++dy) {
                T* orow = out.data() + ((static_cast<std::size_t>(co) * t_out + (it * stride[0] + dt)) * h_out +
                                        (iy * stride[1] + dy)) *
                                           w_out +
                          ix * stride[2];
                const T* wrow = wr + (static_cast<std::size_t>(dt) * kh + dy) * kw;
                for (int dx = 0; dx < kw; ++dx) orow[dx] += v * wrow[dx];
              }
          }
        }

  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result<T>(
      "conv_transpose3d", {co_n, t_out, h_out, w_out}, std::move(out), std::move(inputs),
      [=](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tw = node.inputs[1];
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gw = detail::grad_sink(tw);
        std::vector<T>* gb = has_bias ? detail::grad_sink(node.inputs[2]) : nullptr;
        const T* px = tx.raw();
        const T* pw = tw.raw();
        if (gb) {
          std::size_t i = 0;
          for (int co = 0; co < co_n; ++co) {
            const std::size_t n = static_cast<std::size_t>(t_out) * h_out * w_out;
            for (std::size_t j = 0; j < n; ++j, ++i) (*gb)[static_cast<std::size_t>(co)] += gout[i];
          }
        }
        if (!gx && !gw) return;
        for (int ci = 0; ci < ci_n; ++ci)
          for (int it = 0; it < t_in; ++it)
            for (int iy = 0; iy < h_in; ++iy)
              for (int ix = 0; ix < w_in; ++ix) {
                const std::size_t xi = ((static_cast<std::size_t>(ci) * t_in + it) * h_in + iy) * w_in + ix;
                const T xv = px[xi];
                T gacc = T(0);
                for (int co = 0; co < co_n; ++co) {
                  const std::size_t wbase = ((static_cast<std::size_t>(ci) * co_n + co) * kt) *
                                            static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw);
                  for (int dt = 0; dt < kt; ++dt)
                    for (int dy = 0; dy < kh; ++dy) {
                      const std::size_t orow = ((static_cast<std::size_t>(co) * t_out + (it * stride[0] + dt)) * h_out +
                                                (iy * stride[1] + dy)) *
                                                   static_cast<std::size_t>(w_out) +
                                               static_cast<std::size_t>(ix) * stride[2];
                      const std::size_t wrow = wbase + (static_cast<std::size_t>(dt) * kh + dy) * kw;
                      for (int dx = 0; dx < kw; ++dx) {
                        const T g = gout[orow + static_cast<std::size_t>(dx)];
                        if (gx) gacc += g * pw[wrow + static_cast<std::size_t>(dx)];
                        if (gw) (*gw)[wrow + static_cast<std::size_t>(dx)] += g * xv;
                      }
                    }
                }
                if (gx) (*gx)[xi] += gacc;
              }
      });
}

// ---------------------------------------------------------------------------
// Depthwise cross-correlation: x (C, Hx, Wx) against kernel (C, Hk, Wk),
// valid placement only, output (C, Hx-Hk+1, Wx-Wk+1). Differentiable w.r.t.
// both feature maps.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> xcorr_depthwise(const Tensor<T>& x, const Tensor<T>& kernel) {
  if (x.ndim() != 3 || kernel.ndim() != 3)
    throw ShapeError("xcorr_depthwise: expected rank-3 feature maps, got " + shape_str(x.shape()) + " and " +
                     shape_str(kernel.shape()));
  if (x.extent(0) != kernel.extent(0))
    throw GeometryError("xcorr_depthwise: channel mismatch " + std::to_string(x.extent(0)) + " vs " +
                        std::to_string(kernel.extent(0)));
  const int c_n = x.extent(0), hx = x.extent(1), wx = x.extent(2);
  const int hk = kernel.extent(1), wk = kernel.extent(2);
  if (hk > hx || wk > wx)
    throw GeometryError("xcorr_depthwise: kernel " + shape_str(kernel.shape()) + " larger than input " +
                        shape_str(x.shape()));
  const int ho = hx - hk + 1, wo = wx - wk + 1;

  std::vector<T> out(static_cast<std::size_t>(c_n) * ho * wo);
  const T* px = x.raw();
  const T* pk = kernel.raw();
  std::size_t oi = 0;
  for (int c = 0; c < c_n; ++c) {
    const T* xc = px + static_cast<std::size_t>(c) * hx * wx;
    const T* kc = pk + static_cast<std::size_t>(c) * hk * wk;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        T acc = T(0);
        for (int u = 0; u < hk; ++u) {
          const T* xr = xc + static_cast<std::size_t>(oy + u) * wx + ox;
          const T* kr = kc + static_cast<std::size_t>(u) * wk;
          for (int v = 0; v < wk; ++v) acc += xr[v] * kr[v];
        }
        out[oi] = acc;
      }
  }
  return make_result<T>(
      "xcorr_depthwise", {c_n, ho, wo}, std::move(out), {x, kernel},
      [=](typename Tensor<T>::Node& node, const std::vector<T>& gout) {
        auto& tx = node.inputs[0];
        auto& tk = node.inputs[1];
        std::vector<T>* gx = detail::grad_sink(tx);
        std::vector<T>* gk = detail::grad_sink(tk);
        if (!gx && !gk) return;
        const T* px = tx.raw();
        const T* pk = tk.raw();
        std::size_t oi = 0;
        for (int c = 0; c < c_n; ++c) {
          const std::size_t xc = static_cast<std::size_t>(c) * hx * wx;
          const std::size_t kc = static_cast<std::size_t>(c) * hk * wk;
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox, ++oi) {
              const T g = gout[oi];
              if (g == T(0)) continue;
              for (int u = 0; u < hk; ++u) {
                const std::size_t xrow = xc + static_cast<std::size_t>(oy + u) * wx + static_cast<std::size_t>(ox);
                const std::size_t krow = kc + static_cast<std::size_t>(u) * wk;
                for (int v = 0; v < wk; ++v) {
                  if (gx) (*gx)[xrow + static_cast<std::size_t>(v)] += g * pk[krow + static_cast<std::size_t>(v)];
                  if (gk) (*gk)[krow + static_cast<std::size_t>(v)] += g * px[xrow + static_cast<std::size_t>(v)];
                }
              }
            }
        }
      });
}

}  // namespace clim
