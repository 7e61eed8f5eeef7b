#pragma once

// Toy training loops: interpolation on generated triplets, tracking on
// generated crop samples, and the joint phase that lets tracking gradients
// reach the interpolation network. Deterministic given the seed; a non-finite
// loss aborts with a divergence diagnostic rather than continuing.

#include "clim/optim.hpp"
#include "clim/synthbench.hpp"

namespace clim {

struct TrainOptions {
  int steps = 100;
  int batch = 4;
  double lr = 1e-2, lr_end = 1e-4;
  double momentum = 0.9, weight_decay = 1e-4;
};

namespace detail {

inline double decayed_lr(const TrainOptions& opt, int step) {
  return opt.steps > 1 ? log_decay_lr(opt.lr, opt.lr_end, step, opt.steps) : opt.lr;
}

inline void check_finite_loss(const char* what, int step, double v) {
  if (!std::isfinite(v))
    throw NumericError(std::string(what) + " diverged at step " + std::to_string(step) +
                       ": loss is not finite (reduce lr or batch variance)");
}

// High-contrast color against the mid-gray textured background.
inline std::array<double, 3> contrast_color(Rng& rng) {
  std::array<double, 3> c;
  for (double& v : c) v = rng.uniform() < 0.5 ? rng.uniform(0.02, 0.22) : rng.uniform(0.78, 0.98);
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Interpolation phase
// ---------------------------------------------------------------------------

template <typename T>
struct Triplet {
  Tensor<T> a, mid, b;
};

// Translating squares on textured backgrounds, one 3-frame scene per triplet.
template <typename T>
std::vector<Triplet<T>> make_interp_triplets(int n, int frame, Rng& rng) {
  if (frame % 8 != 0) throw GeometryError("make_interp_triplets: frame size must be divisible by 8");
  std::vector<Triplet<T>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SceneConfig cfg;
    cfg.frame_w = cfg.frame_h = frame;
    cfg.length = 3;
    cfg.target_w = cfg.target_h = rng.uniform(6, 10);
    cfg.vel_x = rng.uniform(-2.5, 2.5);
    cfg.vel_y = rng.uniform(-2.5, 2.5);
    cfg.target_color = detail::contrast_color(rng);
    cfg.texture_seed = rng.next_u32();
    const double mx = 2 + cfg.target_w / 2 + 2 * std::abs(cfg.vel_x);
    const double my = 2 + cfg.target_h / 2 + 2 * std::abs(cfg.vel_y);
    cfg.start_cx = rng.uniform(mx, frame - mx);
    cfg.start_cy = rng.uniform(my, frame - my);
    SequenceData<T> seq = generate_sequence<T>(cfg, rng.next_u32());
    out.push_back({seq.frames[0], seq.frames[1], seq.frames[2]});
  }
  return out;
}

// Mean per-clip L1 of predicting the middle frame by copying the first.
template <typename T>
double copy_first_baseline(const std::vector<Triplet<T>>& data) {
  if (data.empty()) throw GeometryError("copy_first_baseline: no triplets");
  double total = 0;
  for (const Triplet<T>& t : data) {
    const T* a = t.a.raw();
    const T* m = t.mid.raw();
    for (std::size_t i = 0; i < t.a.numel(); ++i) total += std::abs(static_cast<double>(a[i]) - m[i]);
  }
  return total / static_cast<double>(data.size());
}

template <typename T>
double eval_interp(const ClimNet<T>& net, const std::vector<Triplet<T>>& data) {
  if (data.empty()) throw GeometryError("eval_interp: no triplets");
  NoGradGuard ng;
  double total = 0;
  for (const Triplet<T>& t : data)
    total += static_cast<double>(interframe_loss<T>({net.forward(t.a, t.b)}, {t.mid}).item());
  return total / static_cast<double>(data.size());
}

// Trains parameters selected by step_pred(name); returns the per-step loss
// curve. Batches cycle through the data in order, so runs are reproducible.
template <typename T, typename Pred>
std::vector<double> train_interp(const ClimNet<T>& net, ParamStore<T>& params, Pred step_pred,
                                 const std::vector<Triplet<T>>& data, const TrainOptions& opt) {
  if (data.empty()) throw GeometryError("train_interp: no triplets");
  Sgd<T> sgd(static_cast<T>(opt.lr), static_cast<T>(opt.momentum), static_cast<T>(opt.weight_decay));
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    std::vector<Tensor<T>> preds, gts;
    preds.reserve(static_cast<std::size_t>(opt.batch));
    gts.reserve(static_cast<std::size_t>(opt.batch));
    for (int i = 0; i < opt.batch; ++i) {
      const Triplet<T>& t = data[(static_cast<std::size_t>(step) * opt.batch + i) % data.size()];
      preds.push_back(net.forward(t.a, t.b));
      gts.push_back(t.mid);
    }
    Tensor<T> loss = interframe_loss(preds, gts);
    const double v = static_cast<double>(loss.item());
    detail::check_finite_loss("interpolation training", step, v);
    curve.push_back(v);
    backward(loss);
    sgd.set_lr(static_cast<T>(detail::decayed_lr(opt, step)));
    sgd.step_matching(params, step_pred);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Tracking phase
// ---------------------------------------------------------------------------

template <typename T>
struct TrackSample {
  Tensor<T> tmpl, prev, search;
  Box gt_in_crop;
  LabelTargets<T> labels;
};

// Template from an earlier frame, search/prev crops around a jittered current
// box; label targets are fixed at sampling time since the grid never changes.
template <typename T>
TrackSample<T> make_track_sample(const TrackModel<T>& model, const std::vector<Tensor<T>>& frames,
                                 const std::vector<Box>& truth, int t_template, int t_search, Rng& rng) {
  const TrackerConfig& cfg = model.config();
  const double region_scale = static_cast<double>(cfg.search_size) / cfg.template_size;
  const Box cur = truth[static_cast<std::size_t>(t_search)];
  const double side = context_side(cur, cfg.context);
  Box jittered = cur;
  jittered.x += rng.uniform(-0.08, 0.08) * side;
  jittered.y += rng.uniform(-0.08, 0.08) * side;
  jittered.w *= rng.uniform(0.9, 1.1);
  jittered.h *= rng.uniform(0.9, 1.1);
  const CropMap cm = make_crop_map(jittered, cfg.context, cfg.search_size, region_scale);
  const int t_prev = std::max(0, t_search - cfg.m);

  TrackSample<T> s;
  s.tmpl = crop_patch(frames[static_cast<std::size_t>(t_template)], truth[static_cast<std::size_t>(t_template)],
                      cfg.context, cfg.template_size);
  s.search = crop_patch(frames[static_cast<std::size_t>(t_search)], jittered, cfg.context, cfg.search_size,
                        region_scale);
  s.prev = crop_patch(frames[static_cast<std::size_t>(t_prev)], jittered, cfg.context, cfg.search_size, region_scale);
  s.gt_in_crop = cm.to_crop(cur);
  s.labels = assign_labels<T>(s.gt_in_crop, model.grid(), cfg.central_fraction);
  return s;
}

template <typename T>
std::vector<TrackSample<T>> samples_from_sequence(const TrackModel<T>& model, const SequenceData<T>& seq, int n,
                                                  Rng& rng) {
  if (seq.frames.size() < 2) throw GeometryError("samples_from_sequence: need at least 2 frames");
  std::vector<TrackSample<T>> out;
  out.reserve(static_cast<std::size_t>(n));
  const int last = static_cast<int>(seq.frames.size()) - 1;
  for (int i = 0; i < n; ++i) {
    const int t_search = rng.randint(1, last);
    const int t_template = rng.randint(0, t_search - 1);
    out.push_back(make_track_sample(model, seq.frames, seq.truth, t_template, t_search, rng));
  }
  return out;
}

// Fresh random scenes, one sample per scene.
template <typename T>
std::vector<TrackSample<T>> make_track_samples(const TrackModel<T>& model, const SceneConfig& base, int n, Rng& rng) {
  std::vector<TrackSample<T>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SceneConfig cfg = base;
    cfg.length = 6;
    cfg.occlude_len = 0;
    cfg.aspect_amp = 0;
    cfg.target_w = base.target_w * rng.uniform(0.8, 1.25);
    cfg.target_h = base.target_h * rng.uniform(0.8, 1.25);
    cfg.vel_x = rng.uniform(-2, 2);
    cfg.vel_y = rng.uniform(-2, 2);
    cfg.target_color = detail::contrast_color(rng);
    cfg.texture_seed = rng.next_u32();
    const double mx = 2 + cfg.target_w / 2 + (cfg.length - 1) * std::abs(cfg.vel_x);
    const double my = 2 + cfg.target_h / 2 + (cfg.length - 1) * std::abs(cfg.vel_y);
    cfg.start_cx = rng.uniform(mx, cfg.frame_w - mx);
    cfg.start_cy = rng.uniform(my, cfg.frame_h - my);
    SequenceData<T> seq = generate_sequence<T>(cfg, rng.next_u32());
    const int t_search = rng.randint(1, cfg.length - 1);
    const int t_template = rng.randint(0, t_search - 1);
    out.push_back(make_track_sample(model, seq.frames, seq.truth, t_template, t_search, rng));
  }
  return out;
}

// One forward pass of the tracking pipeline on a sample, returning the
// composite loss term.
template <typename T>
Tensor<T> sample_loss(const TrackModel<T>& model, const TrackSample<T>& s) {
  const TrackerConfig& cfg = model.config();
  TemplateFeatures<T> z = model.extract_template(s.tmpl);
  Tensor<T> latent = model.latent_frame(s.prev, s.search);
  HeadOutputs<T> h = model.heads_forward(model.head_input(z, s.search, latent));
  return tracking_loss(h, s.labels, static_cast<T>(cfg.lambda1), static_cast<T>(cfg.lambda2),
                       static_cast<T>(cfg.lambda3))
      .total;
}

template <typename T, typename Pred>
std::vector<double> train_tracking(TrackModel<T>& model, Pred step_pred, const std::vector<TrackSample<T>>& data,
                                   const TrainOptions& opt) {
  if (data.empty()) throw GeometryError("train_tracking: no samples");
  Sgd<T> sgd(static_cast<T>(opt.lr), static_cast<T>(opt.momentum), static_cast<T>(opt.weight_decay));
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    Tensor<T> acc;
    for (int i = 0; i < opt.batch; ++i) {
      const TrackSample<T>& s = data[(static_cast<std::size_t>(step) * opt.batch + i) % data.size()];
      Tensor<T> l = sample_loss(model, s);
      acc = acc.defined() ? add(acc, l) : l;
    }
    Tensor<T> loss = scale(acc, static_cast<T>(1.0 / opt.batch));
    const double v = static_cast<double>(loss.item());
    detail::check_finite_loss("tracking training", step, v);
    curve.push_back(v);
    backward(loss);
    sgd.set_lr(static_cast<T>(detail::decayed_lr(opt, step)));
    sgd.step_matching(model.params(), step_pred);
  }
  return curve;
}

inline bool step_all(const std::string&) { return true; }
inline bool step_latent_only(const std::string& name) { return name.rfind("climnet.", 0) == 0; }
inline bool step_tracker_only(const std::string& name) { return name.rfind("climnet.", 0) != 0; }

}  // namespace clim
