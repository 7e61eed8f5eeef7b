#pragma once

// Similarity-map transformer. Correlation responses are projected to a common
// token width and flattened to (positions, channels) row-major token maps with
// a fixed sinusoidal positional encoding. The encoder stage fuses the two
// template-search maps (pooled-coefficient modulation, then attention against
// the shallower map, a 1x1 adjustment conv, and an FFN); the decoder stage
// self-attends over the latent-frame map and cross-attends into the encoder
// output. Sublayers are post-norm: normalize(residual + branch).

#include <cmath>
#include <string>

#include "clim/conv.hpp"
#include "clim/ops.hpp"
#include "clim/params.hpp"

namespace clim {

struct LctConfig {
  int token_c = 128;
  int heads = 4;
  int ffn_mult = 4;
  // Substitute the shallower map in the modulation term of the encoder fusion
  // (the plain form scales the deeper map by its own coefficient).
  bool fuse_modulates_shallow = false;
};

// Fixed table: pe[p, 2i] = sin(p / 10000^(2i/C)), pe[p, 2i+1] = cos(same).
template <typename T>
Tensor<T> positional_encoding(int positions, int channels) {
  if (positions < 1 || channels < 1) throw ShapeError("positional_encoding: non-positive extents");
  std::vector<T> data(static_cast<std::size_t>(positions) * channels);
  for (int p = 0; p < positions; ++p)
    for (int c = 0; c < channels; ++c) {
      const double rate = std::pow(10000.0, static_cast<double>(c - c % 2) / channels);
      const double angle = static_cast<double>(p) / rate;
      data[static_cast<std::size_t>(p) * channels + c] =
          static_cast<T>(c % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return Tensor<T>::from_data({positions, channels}, std::move(data));
}

// (C,H,W) response -> 1x1 projection to token width -> (H*W, C_tok) rows in
// row-major position order.
template <typename T>
Tensor<T> to_token_map(const Tensor<T>& response, const Tensor<T>& w, const Tensor<T>& b) {
  if (response.ndim() != 3)
    throw ShapeError("to_token_map: expected (C,H,W) response, got " + shape_str(response.shape()));
  Tensor<T> proj = conv2d(response, w, b, {1, 1}, {0, 0});
  const int c = proj.extent(0), p = proj.extent(1) * proj.extent(2);
  return transpose2d(reshape(proj, {c, p}));
}

template <typename T>
Tensor<T> add_positional(const Tensor<T>& tokens, const Tensor<T>& pe) {
  return add(tokens, pe);
}

// sigmoid(Conv(GMP(shallow) + GAP(deep))): one coefficient per channel.
template <typename T>
Tensor<T> encoder_coefficient(const Tensor<T>& shallow, const Tensor<T>& deep, const Tensor<T>& w,
                              const Tensor<T>& b) {
  if (shallow.ndim() != 2 || deep.ndim() != 2 || shallow.shape() != deep.shape())
    throw ShapeError("encoder_coefficient: token maps must share (P,C), got " + shape_str(shallow.shape()) +
                     " and " + shape_str(deep.shape()));
  const int c = shallow.extent(1);
  Tensor<T> gmp = reduce_axes(shallow, {0}, ReduceMode::Max);
  Tensor<T> gap = reduce_axes(deep, {0}, ReduceMode::Mean);
  Tensor<T> mixed = add_vec(matmul(reshape(add(gmp, gap), {1, c}), w), b, 1);
  return reshape(sigmoid(mixed), {c});
}

// deep + coeff (x) modulated, broadcast over rows. The modulated map is the
// deep map itself in the written form of the fusion.
template <typename T>
Tensor<T> encoder_fuse(const Tensor<T>& deep, const Tensor<T>& coeff, const Tensor<T>& modulated) {
  return add(deep, mul_vec(modulated, coeff, 1));
}

template <typename T>
Tensor<T> encoder_fuse(const Tensor<T>& deep, const Tensor<T>& coeff) {
  return encoder_fuse(deep, coeff, deep);
}

template <typename T>
struct MultiHeadAttention {
  int heads = 1;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c, int heads_) {
    if (heads_ < 1 || c % heads_ != 0)
      throw ShapeError("MultiHeadAttention: head count " + std::to_string(heads_) + " must divide width " +
                       std::to_string(c));
    heads = heads_;
    const auto fan = static_cast<std::size_t>(c);
    wq = ps.add(prefix + ".q.w", init_uniform_fan_in<T>(rng, {c, c}, fan));
    bq = ps.add(prefix + ".q.b", init_uniform_fan_in<T>(rng, {c}, fan));
    wk = ps.add(prefix + ".k.w", init_uniform_fan_in<T>(rng, {c, c}, fan));
    bk = ps.add(prefix + ".k.b", init_uniform_fan_in<T>(rng, {c}, fan));
    wv = ps.add(prefix + ".v.w", init_uniform_fan_in<T>(rng, {c, c}, fan));
    bv = ps.add(prefix + ".v.b", init_uniform_fan_in<T>(rng, {c}, fan));
    wo = ps.add(prefix + ".out.w", init_uniform_fan_in<T>(rng, {c, c}, fan));
    bo = ps.add(prefix + ".out.b", init_uniform_fan_in<T>(rng, {c}, fan));
  }

  // q: (Pq, C); k, v: (Pk, C). Returns (Pq, C).
  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) const {
    if (k.extent(0) != v.extent(0))
      throw ShapeError("MultiHeadAttention: key/value row mismatch " + shape_str(k.shape()) + " vs " +
                       shape_str(v.shape()));
    const int c = q.extent(1);
    if (c != wq.extent(0) || k.extent(1) != c || v.extent(1) != c)
      throw ShapeError("MultiHeadAttention: token width mismatch");
    const int d = c / heads;
    Tensor<T> qp = add_vec(matmul(q, wq), bq, 1);
    Tensor<T> kp = add_vec(matmul(k, wk), bk, 1);
    Tensor<T> vp = add_vec(matmul(v, wv), bv, 1);
    std::vector<Tensor<T>> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor<T> qh = slice(qp, 1, h * d, d);
      Tensor<T> kh = slice(kp, 1, h * d, d);
      Tensor<T> vh = slice(vp, 1, h * d, d);
      Tensor<T> att = softmax(scale(matmul(qh, kh, false, true), T(1) / static_cast<T>(std::sqrt(double(d)))), 1);
      outs.push_back(matmul(att, vh));
    }
    return add_vec(matmul(concat(outs, 1), wo), bo, 1);
  }
};

template <typename T>
struct FeedForward {
  Tensor<T> w1, b1, w2, b2;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c, int mult) {
    const int hidden = c * mult;
    w1 = ps.add(prefix + ".w1", init_uniform_fan_in<T>(rng, {c, hidden}, static_cast<std::size_t>(c)));
    b1 = ps.add(prefix + ".b1", init_uniform_fan_in<T>(rng, {hidden}, static_cast<std::size_t>(c)));
    w2 = ps.add(prefix + ".w2", init_uniform_fan_in<T>(rng, {hidden, c}, static_cast<std::size_t>(hidden)));
    b2 = ps.add(prefix + ".b2", init_uniform_fan_in<T>(rng, {c}, static_cast<std::size_t>(hidden)));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return add_vec(matmul(relu(add_vec(matmul(x, w1), b1, 1)), w2), b2, 1);
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma, beta;

  void init(ParamStore<T>& ps, const std::string& prefix, int c) {
    gamma = ps.add(prefix + ".gamma", Tensor<T>::ones({c}));
    beta = ps.add(prefix + ".beta", Tensor<T>::zeros({c}));
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

// Encoder stage: coefficient-fused deep map queries the shallow map, the
// attention output is adjusted by a 1x1 conv before its residual, then an FFN
// sublayer.
template <typename T>
struct LaeieStage {
  Tensor<T> cw, cb, pw, pb;
  MultiHeadAttention<T> att;
  FeedForward<T> ffn;
  LayerNormParams<T> ln1, ln2;
  bool fuse_modulates_shallow = false;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, const LctConfig& cfg) {
    const int c = cfg.token_c;
    fuse_modulates_shallow = cfg.fuse_modulates_shallow;
    cw = ps.add(prefix + ".coeff.w", init_uniform_fan_in<T>(rng, {c, c}, static_cast<std::size_t>(c)));
    cb = ps.add(prefix + ".coeff.b", init_uniform_fan_in<T>(rng, {c}, static_cast<std::size_t>(c)));
    att.init(ps, prefix + ".att", rng, c, cfg.heads);
    pw = ps.add(prefix + ".post.w", init_uniform_fan_in<T>(rng, {c, c}, static_cast<std::size_t>(c)));
    pb = ps.add(prefix + ".post.b", init_uniform_fan_in<T>(rng, {c}, static_cast<std::size_t>(c)));
    ffn.init(ps, prefix + ".ffn", rng, c, cfg.ffn_mult);
    ln1.init(ps, prefix + ".ln1", c);
    ln2.init(ps, prefix + ".ln2", c);
  }

  Tensor<T> forward(const Tensor<T>& shallow, const Tensor<T>& deep) const {
    Tensor<T> coeff = encoder_coefficient(shallow, deep, cw, cb);
    Tensor<T> fused = encoder_fuse(deep, coeff, fuse_modulates_shallow ? shallow : deep);
    Tensor<T> attended = add_vec(matmul(att.forward(fused, shallow, shallow), pw), pb, 1);
    Tensor<T> a = ln1.forward(add(fused, attended));
    return ln2.forward(add(a, ffn.forward(a)));
  }
};

// Decoder stage: self-attention over the latent-frame map, cross-attention
// into the encoder output, FFN; each sublayer post-normalized.
template <typename T>
struct CalidStage {
  MultiHeadAttention<T> self_att, cross_att;
  FeedForward<T> ffn;
  LayerNormParams<T> ln1, ln2, ln3;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, const LctConfig& cfg) {
    const int c = cfg.token_c;
    self_att.init(ps, prefix + ".self", rng, c, cfg.heads);
    cross_att.init(ps, prefix + ".cross", rng, c, cfg.heads);
    ffn.init(ps, prefix + ".ffn", rng, c, cfg.ffn_mult);
    ln1.init(ps, prefix + ".ln1", c);
    ln2.init(ps, prefix + ".ln2", c);
    ln3.init(ps, prefix + ".ln3", c);
  }

  Tensor<T> forward(const Tensor<T>& latent, const Tensor<T>& encoder_out) const {
    Tensor<T> s = ln1.forward(add(latent, self_att.forward(latent, latent, latent)));
    Tensor<T> x = ln2.forward(add(s, cross_att.forward(s, encoder_out, encoder_out)));
    return ln3.forward(add(x, ffn.forward(x)));
  }
};

inline std::string lct_join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
class Lct {
 public:
  Lct(const LctConfig& cfg, int response_channels, ParamStore<T>& ps, const std::string& prefix, Rng& rng)
      : cfg_(cfg) {
    const int c = cfg.token_c, rc = response_channels;
    const auto fan = static_cast<std::size_t>(rc);
    p4w_ = ps.add(lct_join(prefix, "proj4.w"), init_uniform_fan_in<T>(rng, {c, rc, 1, 1}, fan));
    p4b_ = ps.add(lct_join(prefix, "proj4.b"), init_uniform_fan_in<T>(rng, {c}, fan));
    p5w_ = ps.add(lct_join(prefix, "proj5.w"), init_uniform_fan_in<T>(rng, {c, rc, 1, 1}, fan));
    p5b_ = ps.add(lct_join(prefix, "proj5.b"), init_uniform_fan_in<T>(rng, {c}, fan));
    ptw_ = ps.add(lct_join(prefix, "projt.w"), init_uniform_fan_in<T>(rng, {c, rc, 1, 1}, fan));
    ptb_ = ps.add(lct_join(prefix, "projt.b"), init_uniform_fan_in<T>(rng, {c}, fan));
    encoder_.init(ps, lct_join(prefix, "enc"), rng, cfg);
    decoder_.init(ps, lct_join(prefix, "dec"), rng, cfg);
  }

  const LctConfig& config() const { return cfg_; }

  // Raw depthwise correlation responses, all (C_resp, Hr, Wr). Returns the
  // fused (P, token_c) map; callers reshape back to (token_c, Hr, Wr).
  Tensor<T> forward(const Tensor<T>& resp_s4, const Tensor<T>& resp_s5, const Tensor<T>& resp_t5) const {
    if (resp_s4.shape() != resp_s5.shape() || resp_s4.shape() != resp_t5.shape())
      throw ShapeError("Lct: responses must share shape, got " + shape_str(resp_s4.shape()) + ", " +
                       shape_str(resp_s5.shape()) + ", " + shape_str(resp_t5.shape()));
    Tensor<T> m4 = to_token_map(resp_s4, p4w_, p4b_);
    Tensor<T> m5 = to_token_map(resp_s5, p5w_, p5b_);
    Tensor<T> mt = to_token_map(resp_t5, ptw_, ptb_);
    Tensor<T> pe = positional_encoding<T>(m4.extent(0), m4.extent(1));
    Tensor<T> enc = encoder_.forward(add_positional(m4, pe), add_positional(m5, pe));
    return decoder_.forward(add_positional(mt, pe), enc);
  }

 private:
  LctConfig cfg_;
  Tensor<T> p4w_, p4b_, p5w_, p5b_, ptw_, ptb_;
  LaeieStage<T> encoder_;
  CalidStage<T> decoder_;
};

}  // namespace clim
