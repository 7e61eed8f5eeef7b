#pragma once

// Latent-frame interpolation network. Two RGB frames are stacked on the time
// axis and pushed through a four-stage encoder of residual ghost
// spatiotemporal blocks (stages 2..4 downsample by 2), then a three-stage
// decoder of modulated transpose-conv fusion blocks with concatenating skip
// connections, and finally a 3D-to-2D transform that folds time into channels
// and emits a sigmoid-bounded RGB frame of the input size.

#include <array>
#include <string>

#include "clim/conv.hpp"
#include "clim/ops.hpp"
#include "clim/params.hpp"

namespace clim {

enum class SkipMode { Concat, None };

struct ClimNetConfig {
  std::array<int, 4> widths{16, 32, 64, 128};
  bool gating = true;          // channel re-weighting after every block
  bool ghost = true;           // ghost spatial convs; plain spatial convs when off
  bool ms_modulation = true;   // pooled coefficient on upsampled maps; identity when off
  SkipMode skips = SkipMode::Concat;
  int time_steps = 2;

  int decoder_in(int stage) const {  // stage 2..0, channels entering that fusion block
    const int from_above = stage == 2 ? widths[3] : widths[static_cast<std::size_t>(stage) + 1];
    return stage == 2 || skips == SkipMode::None ? from_above : 2 * from_above;
  }
  int transform_in() const {
    return (skips == SkipMode::Concat ? 2 * widths[0] : widths[0]) * time_steps;
  }
};

// Spatial 1x3x3 conv where half the output channels are a cheap per-channel
// map of the other (intrinsic) half; falls back to a plain conv when ghost is
// disabled. Intrinsic channels = ceil(C_out/2); the cheap map doubles them and
// the concatenation is sliced back to C_out when that overshoots.
template <typename T>
struct GhostSpatialConv {
  bool ghost = true;
  int c_out = 0, c_int = 0;
  std::array<int, 2> stride{1, 1};
  Tensor<T> wi, bi, wc, bc;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int c_out_, int stride_, bool ghost_) {
    ghost = ghost_;
    c_out = c_out_;
    stride = {stride_, stride_};
    if (ghost) {
      c_int = (c_out + 1) / 2;
      wi = ps.add(prefix + ".intrinsic.w", init_uniform_fan_in<T>(rng, {c_int, c_in, 1, 3, 3},
                                                                  static_cast<std::size_t>(c_in) * 9));
      bi = ps.add(prefix + ".intrinsic.b", init_uniform_fan_in<T>(rng, {c_int}, static_cast<std::size_t>(c_in) * 9));
      wc = ps.add(prefix + ".cheap.w", init_uniform_fan_in<T>(rng, {c_int, 1, 1, 3, 3}, 9));
      bc = ps.add(prefix + ".cheap.b", init_uniform_fan_in<T>(rng, {c_int}, 9));
    } else {
      c_int = c_out;
      wi = ps.add(prefix + ".w", init_uniform_fan_in<T>(rng, {c_out, c_in, 1, 3, 3},
                                                        static_cast<std::size_t>(c_in) * 9));
      bi = ps.add(prefix + ".b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_in) * 9));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> intrinsic = conv_spatial(x, wi, bi, stride, {1, 1});
    if (!ghost) return intrinsic;
    Tensor<T> cheap = conv_spatial(intrinsic, wc, bc, {1, 1}, {1, 1}, c_int);
    Tensor<T> cat = concat<T>({intrinsic, cheap}, 0);
    return 2 * c_int == c_out ? cat : slice(cat, 0, 0, c_out);
  }
};

// 2+1D factorized unit: ghost spatial conv then a full 3x1x1 temporal conv.
template <typename T>
struct StConv {
  GhostSpatialConv<T> spatial;
  Tensor<T> wt, bt;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int c_out, int stride, bool ghost) {
    spatial.init(ps, prefix + ".spatial", rng, c_in, c_out, stride, ghost);
    wt = ps.add(prefix + ".temporal.w",
                init_uniform_fan_in<T>(rng, {c_out, c_out, 3, 1, 1}, static_cast<std::size_t>(c_out) * 3));
    bt = ps.add(prefix + ".temporal.b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_out) * 3));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv_temporal(spatial.forward(x), wt, bt, 1, 1); }
};

// Residual block: out = shortcut(x) + STConv(ReLU(STConv(x))). The first unit
// carries the stride; the shortcut is a stride-matched 1x1x1 projection
// whenever geometry or width changes, identity otherwise.
template <typename T>
struct GstcBlock {
  StConv<T> st1, st2;
  bool projected = false;
  int stride = 1;
  Tensor<T> ws, bs;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int c_out, int stride_, bool ghost) {
    stride = stride_;
    st1.init(ps, prefix + ".st1", rng, c_in, c_out, stride_, ghost);
    st2.init(ps, prefix + ".st2", rng, c_out, c_out, 1, ghost);
    projected = stride_ != 1 || c_in != c_out;
    if (projected) {
      ws = ps.add(prefix + ".shortcut.w",
                  init_uniform_fan_in<T>(rng, {c_out, c_in, 1, 1, 1}, static_cast<std::size_t>(c_in)));
      bs = ps.add(prefix + ".shortcut.b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_in)));
    }
  }

  Tensor<T> branch(const Tensor<T>& x) const { return st2.forward(relu(st1.forward(x))); }

  Tensor<T> shortcut(const Tensor<T>& x) const {
    return projected ? conv3d(x, ws, bs, {1, stride, stride}, {0, 0, 0}) : x;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return add(shortcut(x), branch(x)); }
};

// Channel gate: x scaled per channel by sigmoid(linear(global average pool)).
template <typename T>
struct FeatureGate {
  Tensor<T> w, b;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c) {
    w = ps.add(prefix + ".w", init_uniform_fan_in<T>(rng, {c, c}, static_cast<std::size_t>(c)));
    b = ps.add(prefix + ".b", init_uniform_fan_in<T>(rng, {c}, static_cast<std::size_t>(c)));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    const int c = x.extent(0);
    Tensor<T> pooled = reshape(pool_global(x, PoolMode::Avg, PoolAxes::Spatiotemporal), {1, c});
    Tensor<T> g = sigmoid(add_vec(matmul(pooled, w), b, 1));
    return mul_vec(x, reshape(g, {c}), 0);
  }
};

// Decoder fusion block: the pooled channel descriptor of the input, passed
// through a learned channel-mixing map and a sigmoid, modulates the
// ReLU'd 2x transpose-conv upsampling of that same input.
template <typename T>
struct MsFusionBlock {
  bool modulated = true;
  int c_out = 0;
  Tensor<T> up_w, up_b, mw, mb;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int c_out_, bool modulated_) {
    modulated = modulated_;
    c_out = c_out_;
    up_w = ps.add(prefix + ".up.w",
                  init_uniform_fan_in<T>(rng, {c_in, c_out, 1, 2, 2}, static_cast<std::size_t>(c_in) * 4));
    up_b = ps.add(prefix + ".up.b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_in) * 4));
    if (modulated) {
      mw = ps.add(prefix + ".modul.w", init_uniform_fan_in<T>(rng, {c_in, c_out}, static_cast<std::size_t>(c_in)));
      mb = ps.add(prefix + ".modul.b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_in)));
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> up = relu(conv_transpose3d(x, up_w, up_b, {1, 2, 2}));
    if (!modulated) return up;
    const int c_in = x.extent(0);
    Tensor<T> pooled = reshape(pool_global(x, PoolMode::Avg, PoolAxes::Spatiotemporal), {1, c_in});
    Tensor<T> g = sigmoid(add_vec(matmul(pooled, mw), mb, 1));
    return mul_vec(up, reshape(g, {c_out}), 0);
  }
};

// Folds time into channels and maps to an RGB frame in [0,1].
template <typename T>
struct FeatureTransform {
  Tensor<T> w1, b1, w2, b2;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int mid) {
    w1 = ps.add(prefix + ".conv1.w", init_uniform_fan_in<T>(rng, {mid, c_in, 3, 3}, static_cast<std::size_t>(c_in) * 9));
    b1 = ps.add(prefix + ".conv1.b", init_uniform_fan_in<T>(rng, {mid}, static_cast<std::size_t>(c_in) * 9));
    w2 = ps.add(prefix + ".conv2.w", init_uniform_fan_in<T>(rng, {3, mid, 3, 3}, static_cast<std::size_t>(mid) * 9));
    b2 = ps.add(prefix + ".conv2.b", init_uniform_fan_in<T>(rng, {3}, static_cast<std::size_t>(mid) * 9));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> z = reshape(x, {x.extent(0) * x.extent(1), x.extent(2), x.extent(3)});
    z = relu(conv2d(z, w1, b1, {1, 1}, {1, 1}));
    return sigmoid(conv2d(z, w2, b2, {1, 1}, {1, 1}));
  }
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
class ClimNet {
 public:
  ClimNet(const ClimNetConfig& cfg, ParamStore<T>& ps, const std::string& prefix, Rng& rng) : cfg_(cfg) {
    const auto& w = cfg_.widths;
    const std::array<int, 4> ins{3, w[0], w[1], w[2]};
    for (int i = 0; i < 4; ++i) {
      const std::string p = join_name(prefix, "enc" + std::to_string(i + 1));
      enc_[static_cast<std::size_t>(i)].init(ps, p, rng, ins[static_cast<std::size_t>(i)],
                                             w[static_cast<std::size_t>(i)], i == 0 ? 1 : 2, cfg_.ghost);
      if (cfg_.gating) egate_[static_cast<std::size_t>(i)].init(ps, p + ".gate", rng, w[static_cast<std::size_t>(i)]);
    }
    for (int s = 2; s >= 0; --s) {
      const std::string p = join_name(prefix, "dec" + std::to_string(s + 1));
      dec_[static_cast<std::size_t>(s)].init(ps, p, rng, cfg_.decoder_in(s), w[static_cast<std::size_t>(s)],
                                             cfg_.ms_modulation);
      if (cfg_.gating) dgate_[static_cast<std::size_t>(s)].init(ps, p + ".gate", rng, w[static_cast<std::size_t>(s)]);
    }
    xform_.init(ps, join_name(prefix, "xform"), rng, cfg_.transform_in(), w[0]);
  }

  const ClimNetConfig& config() const { return cfg_; }

  // x is a (3, T, H, W) clip with H, W divisible by 8.
  Tensor<T> forward_clip(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.extent(0) != 3 || x.extent(1) != cfg_.time_steps)
      throw ShapeError("ClimNet: expected (3," + std::to_string(cfg_.time_steps) + ",H,W) clip, got " +
                       shape_str(x.shape()));
    if (x.extent(2) % 8 != 0 || x.extent(3) % 8 != 0)
      throw GeometryError("ClimNet: spatial extents must be divisible by 8, got " + shape_str(x.shape()));

    std::array<Tensor<T>, 4> e;
    Tensor<T> cur = x;
    for (int i = 0; i < 4; ++i) {
      cur = enc_[static_cast<std::size_t>(i)].forward(cur);
      if (cfg_.gating) cur = egate_[static_cast<std::size_t>(i)].forward(cur);
      e[static_cast<std::size_t>(i)] = cur;
    }
    Tensor<T> d = e[3];
    for (int s = 2; s >= 0; --s) {
      d = dec_[static_cast<std::size_t>(s)].forward(d);
      if (cfg_.gating) d = dgate_[static_cast<std::size_t>(s)].forward(d);
      if (cfg_.skips == SkipMode::Concat) d = concat<T>({d, e[static_cast<std::size_t>(s)]}, 0);
    }
    return xform_.forward(d);
  }

  // Interpolates between two (3, H, W) frames.
  Tensor<T> forward(const Tensor<T>& frame_a, const Tensor<T>& frame_b) const {
    if (frame_a.shape() != frame_b.shape())
      throw ShapeError("ClimNet: frame size mismatch " + shape_str(frame_a.shape()) + " vs " +
                       shape_str(frame_b.shape()));
    return forward_clip(stack_frames(frame_a, frame_b));
  }

  static Tensor<T> stack_frames(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 3 || a.extent(0) != 3)
      throw ShapeError("ClimNet: expected (3,H,W) frames, got " + shape_str(a.shape()));
    Tensor<T> a4 = reshape(a, {3, 1, a.extent(1), a.extent(2)});
    Tensor<T> b4 = reshape(b, {3, 1, b.extent(1), b.extent(2)});
    return concat<T>({a4, b4}, 1);
  }

 private:
  ClimNetConfig cfg_;
  std::array<GstcBlock<T>, 4> enc_;
  std::array<FeatureGate<T>, 4> egate_;
  std::array<MsFusionBlock<T>, 3> dec_;
  std::array<FeatureGate<T>, 3> dgate_;
  FeatureTransform<T> xform_;
};

// Standalone interpolation model: owns the parameter store.
template <typename T>
struct InterpModel {
  ParamStore<T> params;
  ClimNet<T> net;

  InterpModel(const ClimNetConfig& cfg, std::uint32_t seed) : net(make_net(cfg, params, seed)) {}

 private:
  static ClimNet<T> make_net(const ClimNetConfig& cfg, ParamStore<T>& ps, std::uint32_t seed) {
    Rng rng(seed);
    return ClimNet<T>(cfg, ps, "", rng);
  }
};

// Batch-mean of per-clip L1 distances: (1/N) * sum_i ||pred_i - truth_i||_1.
template <typename T>
Tensor<T> interframe_loss(const std::vector<Tensor<T>>& pred, const std::vector<Tensor<T>>& truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw ShapeError("interframe_loss: batch size mismatch (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()) + ")");
  Tensor<T> total = reduce_sum(abs(sub(pred[0], truth[0])));
  for (std::size_t i = 1; i < pred.size(); ++i) total = add(total, reduce_sum(abs(sub(pred[i], truth[i]))));
  return scale(total, T(1) / static_cast<T>(pred.size()));
}

}  // namespace clim
