#pragma once

// Siamese tracking pipeline. A five-stage plain conv backbone (total stride 8,
// stages 4 and 5 spatially aligned) feeds depthwise cross-correlations of
// template features against the search crop and against the interpolated
// latent frame. The fused similarity tokens drive three anchor-free heads:
// 2-class cell scoring, centerness, and exp-positive l/t/r/b regression in
// grid units. Coordinates follow one convention everywhere: boxes live in
// continuous pixel coordinates where pixel i spans [i, i+1).

#include <deque>
#include <memory>
#include <optional>

#include "clim/climnet.hpp"
#include "clim/image.hpp"
#include "clim/lct.hpp"
#include "clim/ops.hpp"

namespace clim {

struct TrackerConfig {
  std::array<int, 5> widths{32, 64, 96, 128, 128};
  std::array<int, 5> strides{2, 2, 2, 1, 1};
  int template_size = 127;
  int search_size = 287;
  int head_hidden = 0;  // 0 = token width
  double context = 0.5;
  double central_fraction = 0.6;
  int m = 1;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 3.0;
  bool use_lct = true;
  bool use_latent = true;
  LctConfig lct;
  ClimNetConfig climnet;

  int total_stride() const {
    int s = 1;
    for (int st : strides) s *= st;
    return s;
  }
  // 3x3/pad-1 stages: n -> (n-1)/stride + 1.
  int feature_extent(int input) const {
    int n = input;
    for (int st : strides) n = (n - 1) / st + 1;
    return n;
  }
  int response_extent() const { return feature_extent(search_size) - feature_extent(template_size) + 1; }
  int head_width() const { return head_hidden > 0 ? head_hidden : lct.token_c; }
};

// Maps response-grid cells to search-crop pixel coordinates: cell j centers at
// (j - (R-1)/2) * stride + S/2.
struct GridGeometry {
  int response = 0;
  int stride = 8;
  int search = 0;

  double cell_center(int j) const {
    return (j - (response - 1) / 2.0) * stride + search / 2.0;
  }
};

// Square context window around a box, resampled to out_size pixels.
struct CropMap {
  double cx = 0, cy = 0, side = 0;
  int out_size = 0;

  double step() const { return side / out_size; }
  Box to_frame(const Box& b) const {
    const double s = step();
    return {cx - side / 2 + b.x * s, cy - side / 2 + b.y * s, b.w * s, b.h * s};
  }
  Box to_crop(const Box& b) const {
    const double s = step();
    return {(b.x - (cx - side / 2)) / s, (b.y - (cy - side / 2)) / s, b.w / s, b.h / s};
  }
};

inline CropMap make_crop_map(const Box& box, double context, int out_size, double region_scale = 1.0) {
  return {box.cx(), box.cy(), context_side(box, context) * region_scale, out_size};
}

template <typename T>
struct Backbone {
  std::array<int, 5> strides{};
  std::array<Tensor<T>, 5> w, b;
  std::array<int, 2> allowed_sizes{};

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, const TrackerConfig& cfg) {
    strides = cfg.strides;
    allowed_sizes = {cfg.template_size, cfg.search_size};
    int c_in = 3;
    for (int i = 0; i < 5; ++i) {
      const int c_out = cfg.widths[static_cast<std::size_t>(i)];
      const std::string p = prefix + ".stage" + std::to_string(i + 1);
      w[static_cast<std::size_t>(i)] =
          ps.add(p + ".w", init_uniform_fan_in<T>(rng, {c_out, c_in, 3, 3}, static_cast<std::size_t>(c_in) * 9));
      b[static_cast<std::size_t>(i)] =
          ps.add(p + ".b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(c_in) * 9));
      c_in = c_out;
    }
  }

  // Returns (stage-4, stage-5) feature maps.
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& img) const {
    check_image("Backbone", img);
    if (img.extent(1) != img.extent(2) ||
        (img.extent(1) != allowed_sizes[0] && img.extent(1) != allowed_sizes[1]))
      throw GeometryError("Backbone: expected a square crop of " + std::to_string(allowed_sizes[0]) + " or " +
                          std::to_string(allowed_sizes[1]) + " px, got " + shape_str(img.shape()));
    Tensor<T> x = img;
    Tensor<T> f4;
    for (int i = 0; i < 5; ++i) {
      const int s = strides[static_cast<std::size_t>(i)];
      x = relu(conv2d(x, w[static_cast<std::size_t>(i)], b[static_cast<std::size_t>(i)], {s, s}, {1, 1}));
      if (i == 3) f4 = x;
    }
    return {f4, x};
  }
};

template <typename T>
struct HeadOutputs {
  Tensor<T> cls1;  // (2, Hr, Wr): channel 0 background, channel 1 foreground
  Tensor<T> cls2;  // (1, Hr, Wr): centerness logits
  Tensor<T> reg;   // (4, Hr, Wr): l,t,r,b in grid units, already exp'd (positive)
};

template <typename T>
struct HeadStack {
  Tensor<T> w1, b1, w2, b2;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int hidden, int c_out) {
    w1 = ps.add(prefix + ".conv1.w", init_uniform_fan_in<T>(rng, {hidden, c_in, 3, 3}, static_cast<std::size_t>(c_in) * 9));
    b1 = ps.add(prefix + ".conv1.b", init_uniform_fan_in<T>(rng, {hidden}, static_cast<std::size_t>(c_in) * 9));
    w2 = ps.add(prefix + ".conv2.w", init_uniform_fan_in<T>(rng, {c_out, hidden, 3, 3}, static_cast<std::size_t>(hidden) * 9));
    b2 = ps.add(prefix + ".conv2.b", init_uniform_fan_in<T>(rng, {c_out}, static_cast<std::size_t>(hidden) * 9));
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(relu(conv2d(x, w1, b1, {1, 1}, {1, 1})), w2, b2, {1, 1}, {1, 1});
  }
};

template <typename T>
struct Heads {
  HeadStack<T> cls1, cls2, reg;

  void init(ParamStore<T>& ps, const std::string& prefix, Rng& rng, int c_in, int hidden) {
    cls1.init(ps, prefix + ".cls1", rng, c_in, hidden, 2);
    cls2.init(ps, prefix + ".cls2", rng, c_in, hidden, 1);
    reg.init(ps, prefix + ".reg", rng, c_in, hidden, 4);
  }

  HeadOutputs<T> forward(const Tensor<T>& m_st) const {
    return {cls1.forward(m_st), cls2.forward(m_st), exp(reg.forward(m_st))};
  }
};

// Per-cell supervision targets. ltrb targets are in grid units like the head
// output; centerness is the geometric mean of opposite-distance ratios.
template <typename T>
struct LabelTargets {
  std::vector<int> cls1;        // 0 bg / 1 fg
  std::vector<T> cls1_weight;   // 0 on ignored cells
  std::vector<T> centerness;
  std::vector<T> l, t, r, b;
  std::vector<int> positive_rows;
  int valid = 0;
};

// gt is in search-crop pixel coordinates. Cells whose center falls in the
// central `central_fraction` of gt are positive; cells outside gt are
// negative; the ring between is ignored. A gt that misses every cell center
// (including a gt outside the crop) yields all-negative labels.
template <typename T>
LabelTargets<T> assign_labels(const Box& gt, const GridGeometry& g, double central_fraction = 0.6) {
  const int r_n = g.response;
  const std::size_t p_n = static_cast<std::size_t>(r_n) * r_n;
  LabelTargets<T> out;
  out.cls1.assign(p_n, 0);
  out.cls1_weight.assign(p_n, T(1));
  out.centerness.assign(p_n, T(0));
  out.l.assign(p_n, T(0));
  out.t.assign(p_n, T(0));
  out.r.assign(p_n, T(0));
  out.b.assign(p_n, T(0));
  const bool degenerate = gt.w <= 0 || gt.h <= 0;
  std::size_t idx = 0;
  for (int i = 0; i < r_n; ++i) {
    const double py = g.cell_center(i);
    for (int j = 0; j < r_n; ++j, ++idx) {
      const double px = g.cell_center(j);
      if (degenerate) continue;
      const double dl = px - gt.x, dt = py - gt.y;
      const double dr = gt.x + gt.w - px, db = gt.y + gt.h - py;
      const bool inside = dl > 0 && dt > 0 && dr > 0 && db > 0;
      if (!inside) continue;  // negative
      const bool central = std::abs(px - gt.cx()) <= central_fraction / 2 * gt.w &&
                           std::abs(py - gt.cy()) <= central_fraction / 2 * gt.h;
      if (!central) {
        out.cls1_weight[idx] = T(0);  // ignore ring
        continue;
      }
      out.cls1[idx] = 1;
      out.centerness[idx] = static_cast<T>(std::sqrt((std::min(dl, dr) / std::max(dl, dr)) *
                                                     (std::min(dt, db) / std::max(dt, db))));
      out.l[idx] = static_cast<T>(dl / g.stride);
      out.t[idx] = static_cast<T>(dt / g.stride);
      out.r[idx] = static_cast<T>(dr / g.stride);
      out.b[idx] = static_cast<T>(db / g.stride);
      out.positive_rows.push_back(static_cast<int>(idx));
    }
  }
  for (const T w : out.cls1_weight)
    if (w != T(0)) ++out.valid;
  return out;
}

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  double ce = 0, bce = 0, loc = 0;
  bool has_positives = false;
};

// lambda1 * CE(cls1, cell labels) over non-ignored cells
// + lambda2 * BCE(cls2, centerness) over positives
// + lambda3 * mean(1 - IoU(exp'd ltrb, target ltrb)) over positives.
template <typename T>
LossBreakdown<T> tracking_loss(const HeadOutputs<T>& h, const LabelTargets<T>& lt, T lambda1, T lambda2, T lambda3) {
  const int p_n = h.cls1.extent(1) * h.cls1.extent(2);
  if (static_cast<std::size_t>(p_n) != lt.cls1.size())
    throw ShapeError("tracking_loss: targets sized for " + std::to_string(lt.cls1.size()) + " cells, heads emit " +
                     std::to_string(p_n));
  LossBreakdown<T> out;
  out.has_positives = !lt.positive_rows.empty();

  std::vector<T> ce_w(lt.cls1_weight);
  if (lt.valid > 0)
    for (T& w : ce_w) w /= static_cast<T>(lt.valid);
  Tensor<T> ce = cross_entropy_rows(transpose2d(reshape(h.cls1, {2, p_n})), lt.cls1, ce_w);
  out.ce = static_cast<double>(ce.item());
  out.total = scale(ce, lambda1);
  if (!out.has_positives) return out;

  const auto n_pos = static_cast<T>(lt.positive_rows.size());
  std::vector<T> bce_w(static_cast<std::size_t>(p_n), T(0));
  for (int row : lt.positive_rows) bce_w[static_cast<std::size_t>(row)] = T(1) / n_pos;
  Tensor<T> bce = bce_logits(reshape(h.cls2, {p_n}), lt.centerness, bce_w);
  out.bce = static_cast<double>(bce.item());

  Tensor<T> pred = gather_rows(transpose2d(reshape(h.reg, {4, p_n})), lt.positive_rows);
  auto col = [&](int k) { return slice(pred, 1, k, 1); };
  auto target_col = [&](const std::vector<T>& src) {
    std::vector<T> vals;
    vals.reserve(lt.positive_rows.size());
    for (int row : lt.positive_rows) vals.push_back(src[static_cast<std::size_t>(row)]);
    const int n = static_cast<int>(vals.size());
    return Tensor<T>::from_data({n, 1}, std::move(vals));
  };
  Tensor<T> pl = col(0), pt = col(1), pr = col(2), pb = col(3);
  Tensor<T> tl = target_col(lt.l), tt = target_col(lt.t), tr = target_col(lt.r), tb = target_col(lt.b);
  Tensor<T> iw = add(minimum(pl, tl), minimum(pr, tr));
  Tensor<T> ih = add(minimum(pt, tt), minimum(pb, tb));
  Tensor<T> inter = mul(iw, ih);
  Tensor<T> area_p = mul(add(pl, pr), add(pt, pb));
  Tensor<T> area_t = mul(add(tl, tr), add(tt, tb));
  Tensor<T> uni = sub(add(area_p, area_t), inter);
  Tensor<T> loc = reduce_mean(sub(Tensor<T>::ones(inter.shape()), div(inter, uni)));
  out.loc = static_cast<double>(loc.item());

  out.total = add(out.total, add(scale(bce, lambda2), scale(loc, lambda3)));
  return out;
}

// Joint foreground score softmax(cls1)_fg * sigmoid(cls2); the argmax cell's
// ltrb spans the returned box in crop pixel coordinates. Pure host
// arithmetic, no graph.
template <typename T>
Box decode_bbox(const HeadOutputs<T>& h, const GridGeometry& g) {
  const int r_n = g.response;
  const std::size_t p_n = static_cast<std::size_t>(r_n) * r_n;
  const T* c1 = h.cls1.raw();
  const T* c2 = h.cls2.raw();
  double best = -1;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < p_n; ++i) {
    const double bg = static_cast<double>(c1[i]), fg = static_cast<double>(c1[p_n + i]);
    const double mx = std::max(bg, fg);
    const double fg_prob = std::exp(fg - mx) / (std::exp(bg - mx) + std::exp(fg - mx));
    const double x2 = static_cast<double>(c2[i]);
    const double cen = x2 >= 0 ? 1.0 / (1.0 + std::exp(-x2)) : std::exp(x2) / (1.0 + std::exp(x2));
    const double score = fg_prob * cen;
    if (score > best) {
      best = score;
      best_idx = i;
    }
  }
  const int i = static_cast<int>(best_idx) / r_n, j = static_cast<int>(best_idx) % r_n;
  const double px = g.cell_center(j), py = g.cell_center(i);
  const T* reg = h.reg.raw();
  const double l = static_cast<double>(reg[0 * p_n + best_idx]) * g.stride;
  const double t = static_cast<double>(reg[1 * p_n + best_idx]) * g.stride;
  const double r = static_cast<double>(reg[2 * p_n + best_idx]) * g.stride;
  const double b = static_cast<double>(reg[3 * p_n + best_idx]) * g.stride;
  return {px - l, py - t, l + r, t + b};
}

inline Box clamp_box(const Box& b, int frame_w, int frame_h) {
  Box out = b;
  out.w = std::clamp(out.w, 1.0, static_cast<double>(frame_w));
  out.h = std::clamp(out.h, 1.0, static_cast<double>(frame_h));
  const double cx = std::clamp(b.cx(), 0.0, static_cast<double>(frame_w));
  const double cy = std::clamp(b.cy(), 0.0, static_cast<double>(frame_h));
  out.x = cx - out.w / 2;
  out.y = cy - out.h / 2;
  return out;
}

template <typename T>
struct TemplateFeatures {
  Tensor<T> f4, f5;
};

template <typename T>
class TrackModel {
 public:
  TrackModel(const TrackerConfig& cfg, std::uint32_t seed) : cfg_(cfg) {
    Rng rng(seed);
    backbone_.init(params_, "backbone", rng, cfg_);
    const int resp_c = cfg_.widths[4];
    if (cfg_.widths[3] != cfg_.widths[4])
      throw ShapeError("TrackModel: stage-4/5 widths must match so correlation responses share channels");
    if (cfg_.use_lct) {
      lct_ = std::make_unique<Lct<T>>(cfg_.lct, resp_c, params_, "lct", rng);
    } else {
      bp_w_ = params_.add("proj5.w", init_uniform_fan_in<T>(rng, {cfg_.lct.token_c, resp_c, 1, 1},
                                                            static_cast<std::size_t>(resp_c)));
      bp_b_ = params_.add("proj5.b", init_uniform_fan_in<T>(rng, {cfg_.lct.token_c}, static_cast<std::size_t>(resp_c)));
    }
    heads_.init(params_, "heads", rng, cfg_.lct.token_c, cfg_.head_width());
    if (cfg_.use_latent) climnet_ = std::make_unique<ClimNet<T>>(cfg_.climnet, params_, "climnet", rng);
  }

  const TrackerConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Crop-history interval; runtime behavior only, touches no weights.
  void set_m(int m) {
    if (m < 1) throw GeometryError("set_m: interval must be >= 1");
    cfg_.m = m;
  }

  GridGeometry grid() const { return {cfg_.response_extent(), cfg_.total_stride(), cfg_.search_size}; }

  TemplateFeatures<T> extract_template(const Tensor<T>& template_img) const {
    auto [f4, f5] = backbone_.forward(template_img);
    return {f4, f5};
  }

  // ClimNet interpolation between the two search crops; passthrough of the
  // current crop when the latent branch is disabled. Crops whose size is not
  // a multiple of 8 are edge-padded for the network and the latent is sliced
  // back (differentiably) to crop size.
  Tensor<T> latent_frame(const Tensor<T>& prev_crop, const Tensor<T>& cur_crop) const {
    if (!climnet_) return cur_crop;
    const int s = cur_crop.extent(1);
    const int padded = (s + 7) / 8 * 8;
    Tensor<T> latent = climnet_->forward(pad_edge_to(prev_crop, padded, padded), pad_edge_to(cur_crop, padded, padded));
    if (padded != s) latent = slice(slice(latent, 1, 0, s), 2, 0, s);
    return latent;
  }

  // Fused similarity map as (token_c, Hr, Wr).
  Tensor<T> head_input(const TemplateFeatures<T>& z, const Tensor<T>& search_img, const Tensor<T>& latent_img) const {
    auto [f4x, f5x] = backbone_.forward(search_img);
    Tensor<T> r4 = xcorr_depthwise(f4x, z.f4);
    Tensor<T> r5 = xcorr_depthwise(f5x, z.f5);
    Tensor<T> tokens;
    if (lct_) {
      Tensor<T> f5l = backbone_.forward(latent_img).second;
      Tensor<T> rt = xcorr_depthwise(f5l, z.f5);
      tokens = lct_->forward(r4, r5, rt);
    } else {
      Tensor<T> m5 = to_token_map(r5, bp_w_, bp_b_);
      tokens = add_positional(m5, positional_encoding<T>(m5.extent(0), m5.extent(1)));
    }
    const int hr = r5.extent(1), wr = r5.extent(2);
    return reshape(transpose2d(tokens), {tokens.extent(1), hr, wr});
  }

  HeadOutputs<T> heads_forward(const Tensor<T>& m_st) const { return heads_.forward(m_st); }

 private:
  TrackerConfig cfg_;
  ParamStore<T> params_;
  Backbone<T> backbone_;
  std::unique_ptr<Lct<T>> lct_;
  Tensor<T> bp_w_, bp_b_;
  Heads<T> heads_;
  std::unique_ptr<ClimNet<T>> climnet_;
};

template <typename T>
struct TrackState {
  Box box;
  long frame_index = 0;
  TemplateFeatures<T> tmpl;
  std::deque<std::pair<long, Tensor<T>>> recent;  // (frame index, search crop), oldest first
};

template <typename T>
TrackState<T> init_track(const TrackModel<T>& model, const Tensor<T>& frame0, const Box& gt0) {
  NoGradGuard ng;
  const TrackerConfig& cfg = model.config();
  TrackState<T> st;
  st.box = gt0;
  st.frame_index = 0;
  st.tmpl = model.extract_template(crop_patch(frame0, gt0, cfg.context, cfg.template_size));
  st.recent.emplace_back(0, crop_patch(frame0, gt0, cfg.context, cfg.search_size,
                                       static_cast<double>(cfg.search_size) / cfg.template_size));
  return st;
}

template <typename T>
Box track_step(const TrackModel<T>& model, TrackState<T>& st, const Tensor<T>& frame) {
  NoGradGuard ng;
  const TrackerConfig& cfg = model.config();
  ++st.frame_index;
  const double region_scale = static_cast<double>(cfg.search_size) / cfg.template_size;
  const CropMap cm = make_crop_map(st.box, cfg.context, cfg.search_size, region_scale);
  Tensor<T> cur = crop_patch(frame, st.box, cfg.context, cfg.search_size, region_scale);
  Tensor<T> prev = cur;  // degenerate pair until the t-m crop exists
  if (static_cast<int>(st.recent.size()) == cfg.m) {
    if (st.recent.front().first != st.frame_index - cfg.m)
      throw AutogradError("track_step: crop history out of sync");
    prev = st.recent.front().second;
  }
  Tensor<T> latent = model.latent_frame(prev, cur);
  HeadOutputs<T> h = model.heads_forward(model.head_input(st.tmpl, cur, latent));
  const Box in_crop = decode_bbox(h, model.grid());
  st.box = clamp_box(cm.to_frame(in_crop), frame.extent(2), frame.extent(1));
  st.recent.emplace_back(st.frame_index, cur);
  while (static_cast<int>(st.recent.size()) > cfg.m) st.recent.pop_front();
  return st.box;
}

}  // namespace clim
