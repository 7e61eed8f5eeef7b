#pragma once

// Synthetic aerial-style sequences and one-pass evaluation. A scene is a
// static textured background, a solid-color target moving with constant
// velocity (optionally with area-preserving sinusoidal aspect modulation),
// and an optional full-width occluder bar tracking the target during a
// scheduled window. Ground truth is analytic, rendering is anti-aliased by
// pixel coverage, and everything is deterministic given the seed.

#include <array>
#include <cstdio>
#include <functional>
#include <thread>

#include "clim/geometry.hpp"
#include "clim/image.hpp"
#include "clim/rng.hpp"
#include "clim/tracker.hpp"

namespace clim {

struct SceneConfig {
  int frame_w = 96, frame_h = 96;
  double target_w = 14, target_h = 14;
  std::array<double, 3> target_color{0.88, 0.25, 0.20};
  double start_cx = 28, start_cy = 32;  // target center at frame 0
  double vel_x = 1.5, vel_y = 0.8;
  double aspect_amp = 0.0;  // fractional width modulation, area preserved
  int aspect_period = 24;
  int occlude_start = -1, occlude_len = 0;
  double occluder_frac = 0.6;  // bar height as a fraction of target height
  std::array<double, 3> occluder_color{0.10, 0.10, 0.13};
  std::uint32_t texture_seed = 7;
  int length = 30;
};

namespace detail {

// Overlap of [a0, a1) with the unit pixel [p, p+1).
inline double pixel_overlap(double a0, double a1, int p) {
  return std::max(0.0, std::min(a1, static_cast<double>(p) + 1.0) - std::max(a0, static_cast<double>(p)));
}

template <typename T>
void blend_rect(Tensor<T>& img, const Box& r, const std::array<double, 3>& color) {
  const int h = img.extent(1), w = img.extent(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  T* p = img.raw_mut();
  const int y0 = std::max(0, static_cast<int>(std::floor(r.y)));
  const int y1 = std::min(h, static_cast<int>(std::ceil(r.y + r.h)));
  const int x0 = std::max(0, static_cast<int>(std::floor(r.x)));
  const int x1 = std::min(w, static_cast<int>(std::ceil(r.x + r.w)));
  for (int y = y0; y < y1; ++y) {
    const double cy = pixel_overlap(r.y, r.y + r.h, y);
    for (int x = x0; x < x1; ++x) {
      const double a = cy * pixel_overlap(r.x, r.x + r.w, x);
      if (a <= 0) continue;
      for (int c = 0; c < 3; ++c) {
        T& v = p[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(y) * w + x];
        v = static_cast<T>((1.0 - a) * static_cast<double>(v) + a * color[static_cast<std::size_t>(c)]);
      }
    }
  }
}

}  // namespace detail

// Analytic target box at frame t.
inline Box scene_box(const SceneConfig& cfg, int t) {
  double w = cfg.target_w, h = cfg.target_h;
  if (cfg.aspect_amp > 0) {
    w = cfg.target_w * (1.0 + cfg.aspect_amp * std::sin(2.0 * 3.141592653589793 * t / cfg.aspect_period));
    h = cfg.target_w * cfg.target_h / w;  // area preserved
  }
  return Box::from_center(cfg.start_cx + cfg.vel_x * t, cfg.start_cy + cfg.vel_y * t, w, h);
}

inline void validate_scene(const SceneConfig& cfg) {
  if (cfg.frame_w < 8 || cfg.frame_h < 8 || cfg.length < 1) throw GeometryError("SceneConfig: degenerate frame/length");
  if (cfg.target_w < 1 || cfg.target_h < 1) throw GeometryError("SceneConfig: target smaller than 1 px");
  if (cfg.occluder_frac < 0 || cfg.occluder_frac > 1)
    throw GeometryError("SceneConfig: occlusion fraction must lie in [0,1]");
  if (cfg.aspect_amp < 0 || cfg.aspect_amp >= 1) throw GeometryError("SceneConfig: aspect amplitude must lie in [0,1)");
  if (cfg.aspect_amp > 0 && cfg.aspect_period < 2) throw GeometryError("SceneConfig: aspect period too short");
  for (int t = 0; t < cfg.length; ++t) {
    const Box b = scene_box(cfg, t);
    if (b.x < 1 || b.y < 1 || b.x + b.w > cfg.frame_w - 1 || b.y + b.h > cfg.frame_h - 1)
      throw GeometryError("SceneConfig: target leaves the 1 px frame margin at frame " + std::to_string(t));
  }
}

template <typename T>
struct SequenceData {
  std::vector<Tensor<T>> frames;
  std::vector<Box> truth;
  std::vector<FrameFlags> flags;
};

template <typename T>
SequenceData<T> generate_sequence(const SceneConfig& cfg, std::uint32_t seed) {
  validate_scene(cfg);
  Rng rng(seed * 2654435761u ^ cfg.texture_seed);

  // Static background: smoothed value noise, slightly tinted per channel.
  const int h = cfg.frame_h, w = cfg.frame_w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> noise(plane);
  for (double& v : noise) v = rng.uniform();
  std::vector<double> tmp(plane);
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += noise[static_cast<std::size_t>(yy) * w + xx];
            ++n;
          }
        tmp[static_cast<std::size_t>(y) * w + x] = acc / n;
      }
    std::swap(noise, tmp);
  }
  const std::array<double, 3> tint{1.0, 0.97, 0.94};
  Tensor<T> background = Tensor<T>::zeros({3, h, w});
  {
    T* p = background.raw_mut();
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        p[static_cast<std::size_t>(c) * plane + i] =
            static_cast<T>((0.35 + 0.30 * noise[i]) * tint[static_cast<std::size_t>(c)]);
  }

  SequenceData<T> out;
  out.frames.reserve(static_cast<std::size_t>(cfg.length));
  for (int t = 0; t < cfg.length; ++t) {
    const Box b = scene_box(cfg, t);
    Tensor<T> frame = Tensor<T>::from_data({3, h, w}, std::vector<T>(background.raw(), background.raw() + 3 * plane));
    detail::blend_rect(frame, b, cfg.target_color);
    const bool occluded = cfg.occlude_len > 0 && t >= cfg.occlude_start && t < cfg.occlude_start + cfg.occlude_len;
    if (occluded) {
      const double bar_h = cfg.occluder_frac * b.h;
      detail::blend_rect(frame, {0.0, b.cy() - bar_h / 2, static_cast<double>(w), bar_h}, cfg.occluder_color);
    }
    const bool aspect = cfg.aspect_amp > 0 && std::abs(b.w - cfg.target_w) > 0.02 * cfg.target_w;
    out.frames.push_back(std::move(frame));
    out.truth.push_back(b);
    out.flags.push_back({occluded, aspect});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence storage: frame_%04d.ppm + annotation.txt
// ---------------------------------------------------------------------------

template <typename T>
void save_sequence(const std::filesystem::path& dir, const SequenceData<T>& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
    save_ppm(dir / name, seq.frames[i]);
  }
  save_annotation(dir / "annotation.txt", seq.truth, seq.flags);
}

template <typename T>
SequenceData<T> load_sequence(const std::filesystem::path& dir) {
  SequenceData<T> seq;
  load_annotation(dir / "annotation.txt", seq.truth, seq.flags);
  seq.frames.reserve(seq.truth.size());
  for (std::size_t i = 0; i < seq.truth.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
    seq.frames.push_back(load_ppm<T>(dir / name));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// OPE metrics
// ---------------------------------------------------------------------------

inline double precision_at(const std::vector<Box>& results, const std::vector<Box>& truth, double threshold_px = 20.0) {
  if (results.size() != truth.size() || results.empty())
    throw GeometryError("precision_at: trajectory length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < results.size(); ++i)
    if (center_distance(results[i], truth[i]) <= threshold_px) ++hits;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

inline constexpr int kSuccessSamples = 21;  // IoU thresholds 0, 0.05, ..., 1

struct SuccessCurve {
  std::array<double, kSuccessSamples> values{};
  double auc = 0;
};

inline SuccessCurve success_auc(const std::vector<Box>& results, const std::vector<Box>& truth) {
  if (results.size() != truth.size() || results.empty())
    throw GeometryError("success_auc: trajectory length mismatch");
  std::vector<double> ious(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) ious[i] = iou(results[i], truth[i]);
  SuccessCurve c;
  for (int k = 0; k < kSuccessSamples; ++k) {
    const double tau = k * 0.05;
    std::size_t hits = 0;
    for (double v : ious)
      if (v > tau) ++hits;
    c.values[static_cast<std::size_t>(k)] = static_cast<double>(hits) / static_cast<double>(results.size());
    c.auc += c.values[static_cast<std::size_t>(k)];
  }
  c.auc /= kSuccessSamples;
  return c;
}

struct MetricsReport {
  struct Slice {
    int frames = 0;
    double precision = 0, auc = 0;
  };
  int frames = 0;
  double precision = 0;
  SuccessCurve success;
  Slice occluded, aspect;
  double fps = 0;       // wall clock; printed, never written to artifacts
  int failures = 0;
};

inline MetricsReport compute_report(const std::vector<Box>& results, const std::vector<Box>& truth,
                                    const std::vector<FrameFlags>& flags) {
  if (results.size() != truth.size() || flags.size() != truth.size())
    throw GeometryError("compute_report: length mismatch");
  MetricsReport r;
  r.frames = static_cast<int>(results.size());
  r.precision = precision_at(results, truth);
  r.success = success_auc(results, truth);
  auto slice = [&](auto pred) {
    MetricsReport::Slice s;
    std::vector<Box> rs, ts;
    for (std::size_t i = 0; i < results.size(); ++i)
      if (pred(flags[i])) {
        rs.push_back(results[i]);
        ts.push_back(truth[i]);
      }
    s.frames = static_cast<int>(rs.size());
    if (!rs.empty()) {
      s.precision = precision_at(rs, ts);
      s.auc = success_auc(rs, ts).auc;
    }
    return s;
  };
  r.occluded = slice([](const FrameFlags& f) { return f.occluded; });
  r.aspect = slice([](const FrameFlags& f) { return f.aspect_change; });
  return r;
}

inline std::string format_report(const MetricsReport& r) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-10s %8s %14s %12s\n", "slice", "frames", "precision@20px", "success_auc");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8d %14.4f %12.4f\n", "overall", r.frames, r.precision, r.success.auc);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8d %14.4f %12.4f\n", "occluded", r.occluded.frames, r.occluded.precision,
                r.occluded.auc);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-10s %8d %14.4f %12.4f\n", "aspect", r.aspect.frames, r.aspect.precision,
                r.aspect.auc);
  out += buf;
  return out;
}

inline std::string format_success_csv(const SuccessCurve& c) {
  std::string out = "tau,success\n";
  char buf[64];
  for (int k = 0; k < kSuccessSamples; ++k) {
    std::snprintf(buf, sizeof buf, "%.2f,%.4f\n", k * 0.05, c.values[static_cast<std::size_t>(k)]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// One-pass evaluation driver
// ---------------------------------------------------------------------------

// A step tracker is called once per frame t >= 1 and returns the frame-t box.
template <typename T>
using StepTracker = std::function<Box(int, const Tensor<T>&)>;
template <typename T>
using TrackerFactory = std::function<StepTracker<T>(const SequenceData<T>&)>;

template <typename T>
struct OpeOutcome {
  MetricsReport report;
  std::vector<std::vector<Box>> trajectories;
};

// One pass, no re-initialization; a throwing tracker step keeps the previous
// estimate for that frame. Sequences may evaluate in parallel; merging is by
// sequence index, so the outcome is independent of jobs.
template <typename T>
OpeOutcome<T> run_ope(const std::vector<SequenceData<T>>& seqs, const TrackerFactory<T>& factory, int jobs = 1) {
  if (seqs.empty()) throw GeometryError("run_ope: no sequences");
  OpeOutcome<T> out;
  out.trajectories.assign(seqs.size(), {});
  std::vector<int> failures(seqs.size(), 0);

  const auto started = std::chrono::steady_clock::now();
  auto eval_one = [&](std::size_t si) {
    const SequenceData<T>& seq = seqs[si];
    if (seq.frames.empty()) throw GeometryError("run_ope: empty sequence");
    StepTracker<T> step = factory(seq);
    std::vector<Box>& traj = out.trajectories[si];
    traj.reserve(seq.frames.size());
    traj.push_back(seq.truth[0]);
    for (std::size_t t = 1; t < seq.frames.size(); ++t) {
      Box b = traj.back();
      try {
        b = step(static_cast<int>(t), seq.frames[t]);
      } catch (const std::exception&) {
        ++failures[si];
      }
      traj.push_back(b);
    }
  };

  jobs = std::max(1, jobs);
  if (jobs == 1 || seqs.size() == 1) {
    for (std::size_t si = 0; si < seqs.size(); ++si) eval_one(si);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), seqs.size());
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int k = 0; k < n_threads; ++k)
      pool.emplace_back([&] {
        for (std::size_t si = next.fetch_add(1); si < seqs.size(); si = next.fetch_add(1)) eval_one(si);
      });
    for (auto& th : pool) th.join();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::vector<Box> all_r, all_t;
  std::vector<FrameFlags> all_f;
  for (std::size_t si = 0; si < seqs.size(); ++si) {
    all_r.insert(all_r.end(), out.trajectories[si].begin(), out.trajectories[si].end());
    all_t.insert(all_t.end(), seqs[si].truth.begin(), seqs[si].truth.end());
    all_f.insert(all_f.end(), seqs[si].flags.begin(), seqs[si].flags.end());
  }
  out.report = compute_report(all_r, all_t, all_f);
  out.report.fps = secs > 0 ? static_cast<double>(all_r.size()) / secs : 0;
  for (int f : failures) out.report.failures += f;
  return out;
}

template <typename T>
TrackerFactory<T> model_tracker_factory(const TrackModel<T>& model) {
  return [&model](const SequenceData<T>& seq) -> StepTracker<T> {
    auto state = std::make_shared<TrackState<T>>(init_track(model, seq.frames[0], seq.truth[0]));
    return [&model, state](int, const Tensor<T>& frame) { return track_step(model, *state, frame); };
  };
}

template <typename T>
TrackerFactory<T> oracle_tracker_factory() {
  return [](const SequenceData<T>& seq) -> StepTracker<T> {
    return [&seq](int t, const Tensor<T>&) { return seq.truth[static_cast<std::size_t>(t)]; };
  };
}

template <typename T>
TrackerFactory<T> static_tracker_factory() {
  return [](const SequenceData<T>& seq) -> StepTracker<T> {
    const Box b0 = seq.truth[0];
    return [b0](int, const Tensor<T>&) { return b0; };
  };
}

// ---------------------------------------------------------------------------
// Sweep and ablation tables
// ---------------------------------------------------------------------------

struct SweepRow {
  int m = 0;
  double precision = 0, auc = 0;
};

template <typename T>
std::vector<SweepRow> sweep_m(TrackModel<T>& model, const std::vector<SequenceData<T>>& seqs,
                              const std::vector<int>& m_values, int jobs = 1) {
  std::vector<SweepRow> rows;
  const int m_saved = model.config().m;
  for (int m : m_values) {
    model.set_m(m);
    const auto ope = run_ope<T>(seqs, model_tracker_factory(model), jobs);
    rows.push_back({m, ope.report.precision, ope.report.success.auc});
  }
  model.set_m(m_saved);
  return rows;
}

inline std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = "    m  precision@20px  success_auc\n";
  char buf[96];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%5d %15.4f %12.4f\n", r.m, r.precision, r.auc);
    out += buf;
  }
  return out;
}

inline std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "m,precision,success_auc\n";
  char buf[96];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.4f,%.4f\n", r.m, r.precision, r.auc);
    out += buf;
  }
  return out;
}

inline const std::array<std::string, 5>& ablation_variant_names() {
  static const std::array<std::string, 5> names{"baseline", "lct", "gstc+lct", "ms-fusion+lct", "climnet+lct"};
  return names;
}

struct AblationRow {
  std::string variant;
  double precision = 0, auc = 0;
  double d_precision = 0, d_auc = 0;  // vs the first (baseline) row
};

inline std::vector<AblationRow> ablation_deltas(std::vector<AblationRow> rows) {
  if (rows.empty()) return rows;
  for (auto& r : rows) {
    r.d_precision = r.precision - rows[0].precision;
    r.d_auc = r.auc - rows[0].auc;
  }
  return rows;
}

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "variant        precision@20px  success_auc  d_precision  d_success\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %15.4f %12.4f %+12.4f %+10.4f\n", r.variant.c_str(), r.precision, r.auc,
                  r.d_precision, r.d_auc);
    out += buf;
  }
  return out;
}

inline std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "variant,precision,success_auc,d_precision,d_success\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f\n", r.variant.c_str(), r.precision, r.auc, r.d_precision,
                  r.d_auc);
    out += buf;
  }
  return out;
}

}  // namespace clim
