// Acceptance harness: verifies one numbered criterion per invocation and
// prints a single "criterion N: PASS/FAIL - detail" line.
//
//   acceptance <1..7> [path-to-cli]
//
//   1  full gradient-check registry passes in under 60 s
//   2  exact identity and zero-case assertions across all components
//   3  brute-force oracle equivalence on 100+ random instances per op family
//   4  interpolation net beats the copy-first baseline by 2x on held-out clips
//   5  tracker training halves its loss and overfits one sequence to IoU 0.5
//   6  evaluation harness self-checks (oracle tracker, sweep rows, ablation)
//   7  repeated CLI runs with one seed produce byte-identical artifacts
//
// Criterion 7 needs the CLI path; the others run in-process.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "clim/clim.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace clim;

namespace {

[[noreturn]] void fail(const std::string& detail) { throw std::runtime_error(detail); }

void check(bool ok, const std::string& detail) {
  if (!ok) fail(detail);
}

const Tensor<double> kNoBias{};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

TrackerConfig toy_tracker_config() {
  TrackerConfig cfg;
  cfg.widths = {4, 8, 8, 8, 8};
  cfg.template_size = 32;
  cfg.search_size = 64;
  cfg.m = 1;
  cfg.lct.token_c = 8;
  cfg.lct.heads = 2;
  cfg.lct.ffn_mult = 2;
  cfg.climnet.widths = {4, 6, 8, 10};
  return cfg;
}

// --------------------------------------------------------------------------
// 1: gradient registry
// --------------------------------------------------------------------------

std::string criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name = "-";
  int n = 0;
  for (const std::string& name : gradcheck_names()) {
    const GradCheckResult r = run_gradcheck(name, 1234);
    check(r.pass, fmt("gradient check '%s' exceeded tolerance: max_rel=%.3g (tol %.1g), %s", name.c_str(), r.max_rel,
                      r.tol, r.worst.c_str()));
    if (r.max_rel > worst) {
      worst = r.max_rel;
      worst_name = name;
    }
    ++n;
  }
  const double secs = seconds_since(t0);
  check(secs < 60.0, fmt("registry passed but took %.1f s (budget 60 s)", secs));
  return fmt("%d checks pass in %.1f s, worst rel err %.2g (%s)", n, secs, worst, worst_name.c_str());
}

// --------------------------------------------------------------------------
// 2: exact identities and zero cases
// --------------------------------------------------------------------------

std::string criterion2() {
  int asserts = 0;
  auto ok = [&](bool c, const char* what) {
    check(c, std::string("identity violated: ") + what);
    ++asserts;
  };
  Rng rng(202);

  {  // zero kernel -> zero output; zero template -> zero response
    Tensor<double> x = testutil::rand_tensor(rng, {2, 3, 5, 5});
    Tensor<double> y = conv3d(x, Tensor<double>::zeros({3, 2, 1, 3, 3}), kNoBias, {1, 1, 1}, {0, 1, 1});
    bool all0 = true;
    for (double v : y.data()) all0 = all0 && v == 0.0;
    ok(all0, "zero conv kernel must give a zero map");
    Tensor<double> r = xcorr_depthwise(testutil::rand_tensor(rng, {2, 6, 6}), Tensor<double>::zeros({2, 3, 3}));
    all0 = true;
    for (double v : r.data()) all0 = all0 && v == 0.0;
    ok(all0, "zero template must give a zero response");
  }
  {  // sigmoid(0) = 0.5 exactly
    Tensor<double> s = sigmoid(Tensor<double>::zeros({3}));
    ok(s.data()[0] == 0.5 && s.data()[1] == 0.5 && s.data()[2] == 0.5, "sigmoid(0) must be 0.5");
  }
  {  // matmul by the identity preserves the input bit-for-bit
    Tensor<double> x = testutil::rand_tensor(rng, {3, 4});
    Tensor<double> eye = Tensor<double>::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.raw_mut()[i * 4 + i] = 1.0;
    Tensor<double> y = matmul(x, eye);
    bool same = true;
    for (std::size_t i = 0; i < x.numel(); ++i) same = same && x.data()[i] == y.data()[i];
    ok(same, "matmul by identity must preserve the input");
  }
  {  // d(sum x)/dx = 1
    Tensor<double> x = testutil::rand_tensor(rng, {7});
    x.set_requires_grad(true);
    Tensor<double> s = reduce_sum(x);
    backward(s);
    bool ones = true;
    for (double g : x.grad()) ones = ones && g == 1.0;
    ok(ones, "gradient of a plain sum must be all ones");
  }
  {  // positional encoding row 0 alternates sin(0)=0 / cos(0)=1
    Tensor<double> pe = positional_encoding<double>(4, 6);
    bool good = true;
    for (int c = 0; c < 6; ++c) good = good && pe.at({0, c}) == (c % 2 == 0 ? 0.0 : 1.0);
    ok(good, "positional encoding row 0 must be the sin(0)/cos(0) pattern");
  }
  {  // aligned crop is an identity resample; far-outside crop is the mean fill
    Tensor<float> frame = Tensor<float>::zeros({3, 32, 32});
    Rng frng(7);
    frng.fill_uniform(frame, 0.0, 1.0);
    const Box centered = Box::from_center(16, 16, 16, 16);
    Tensor<float> crop = crop_patch(frame, centered, 0.5, 32);
    double dev = 0;
    for (std::size_t i = 0; i < crop.numel(); ++i)
      dev = std::max(dev, std::abs(static_cast<double>(crop.data()[i]) - frame.data()[i]));
    ok(dev <= 1e-6, "size-matched centered crop must reproduce the frame");
    const auto means = channel_means(frame);
    Tensor<float> outside = crop_patch(frame, Box{5000, 5000, 8, 8}, 0.5, 8);
    dev = 0;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 8 * 8; ++i)
        dev = std::max(dev, std::abs(static_cast<double>(outside.data()[static_cast<std::size_t>(c) * 64 + i]) -
                                     means[static_cast<std::size_t>(c)]));
    ok(dev <= 1e-6, "fully-outside crop must be filled with the channel means");
  }
  {  // a target covering every cell center makes every cell positive
    LabelTargets<double> lt = assign_labels<double>(Box::from_center(32, 32, 200, 200), GridGeometry{5, 8, 64});
    ok(static_cast<int>(lt.positive_rows.size()) == 25 && lt.valid == 25,
       "a target covering the whole grid must mark every cell positive");
  }
  {  // decode argmax is invariant to a shared shift of both class logits
    const GridGeometry g{3, 8, 64};
    HeadOutputs<double> h;
    h.cls1 = testutil::rand_tensor(rng, {2, 3, 3});
    h.cls2 = testutil::rand_tensor(rng, {1, 3, 3});
    h.reg = testutil::rand_tensor(rng, {4, 3, 3}, 0.25, 3.0);
    const Box a = decode_bbox(h, g);
    Tensor<double> shifted = Tensor<double>::zeros({2, 3, 3});
    for (std::size_t i = 0; i < shifted.numel(); ++i) shifted.raw_mut()[i] = h.cls1.data()[i] + 11.5;
    h.cls1 = shifted;
    const Box b = decode_bbox(h, g);
    ok(a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h,
       "decoded box must not move under a shared class-logit shift");
  }
  {  // exact regression at a cell zeroes the overlap term
    const GridGeometry g{1, 1, 3};
    LabelTargets<double> lt = assign_labels<double>(Box{0, 0, 3, 3}, g, 1.0);
    HeadOutputs<double> h;
    h.cls1 = Tensor<double>::from_data({2, 1, 1}, {-40.0, 40.0});
    h.cls2 = Tensor<double>::from_data({1, 1, 1}, {std::log(lt.centerness[0] / (1 - lt.centerness[0]))});
    h.reg = Tensor<double>::from_data({4, 1, 1}, {lt.l[0], lt.t[0], lt.r[0], lt.b[0]});
    const LossBreakdown<double> lb = tracking_loss(h, lt, 1.0, 1.0, 3.0);
    ok(lb.has_positives && lb.loc <= 1e-6, "an exact box prediction must zero the overlap loss");
    ok(lb.ce <= 1e-6, "a confident correct class must drive the class loss to its floor");
  }
  {  // SGD basics
    ParamStore<double> ps;
    Tensor<double> p = ps.add("p", Tensor<double>::from_data({2}, {1.25, -2.5}));
    Sgd<double> sgd(1.0, 0.0, 0.0);
    backward(scale(reduce_sum(p), 0.0));
    sgd.step(ps);
    ok(p.data()[0] == 1.25 && p.data()[1] == -2.5, "zero gradients and zero decay must leave parameters unchanged");
    backward(reduce_sum(mul(p, Tensor<double>::from_data({2}, {0.25, -1.0}))));
    sgd.step(ps);
    ok(p.data()[0] == 1.0 && p.data()[1] == -1.5, "plain SGD with lr 1 must subtract the gradient");
  }
  {  // zero learning rate gives a bit-flat loss curve
    ClimNetConfig cfg;
    cfg.widths = {4, 6, 8, 10};
    InterpModel<float> model(cfg, 5);
    Rng drng(6);
    const auto data = make_interp_triplets<float>(2, 16, drng);
    TrainOptions opt;
    opt.steps = 3;
    opt.batch = 2;
    opt.lr = 0;
    opt.lr_end = 0;
    const std::vector<double> curve = train_interp(model.net, model.params, step_all, data, opt);
    ok(curve.size() == 3 && curve[0] == curve[1] && curve[1] == curve[2],
       "training at learning rate 0 must repeat the same loss");
  }
  {  // zero velocity and no events: the box never moves; same seed, same bytes
    SceneConfig sc;
    sc.vel_x = sc.vel_y = 0;
    SequenceData<float> seq = generate_sequence<float>(sc, 11);
    bool constant = true;
    for (const Box& b : seq.truth)
      constant = constant && b.x == seq.truth[0].x && b.y == seq.truth[0].y && b.w == seq.truth[0].w &&
                 b.h == seq.truth[0].h;
    ok(constant, "a zero-velocity scene must keep the box fixed");
    SequenceData<float> again = generate_sequence<float>(sc, 11);
    bool same = true;
    for (std::size_t i = 0; i < seq.frames[0].numel(); ++i)
      same = same && seq.frames[0].data()[i] == again.frames[0].data()[i];
    ok(same, "one seed must render one image");
  }
  {  // metric end points
    std::vector<Box> truth;
    for (int i = 0; i < 6; ++i) truth.push_back({i * 5.0, 40.0 - i, 8, 6});
    std::vector<Box> far = truth;
    for (Box& b : far) b.x += 100;
    ok(precision_at(truth, truth) == 1.0, "self-comparison precision must be 1");
    ok(precision_at(far, truth) == 0.0, "100 px offsets must give precision 0");
    const SuccessCurve perfect = success_auc(truth, truth);
    bool shape = perfect.values[20] == 0.0;
    for (int k = 0; k < 20; ++k) shape = shape && perfect.values[static_cast<std::size_t>(k)] == 1.0;
    ok(shape && std::abs(perfect.auc - 20.0 / 21.0) <= 1e-12,
       "perfect overlap must fill the success curve except at threshold 1");
    const SuccessCurve none = success_auc(far, truth);
    bool zero = none.auc == 0.0;
    for (double v : none.values) zero = zero && v == 0.0;
    ok(zero, "disjoint boxes must zero the success curve");
  }
  return fmt("%d exact identities hold", asserts);
}

// --------------------------------------------------------------------------
// 3: oracle equivalence on randomized instances
// --------------------------------------------------------------------------

std::string criterion3() {
  double overall = 0;
  auto track = [&](double dev, const char* family) {
    check(dev <= 1e-5, fmt("%s deviates from the brute-force oracle by %.3g (limit 1e-5)", family, dev));
    overall = std::max(overall, dev);
  };

  {  // plane convolution (backbone)
    Rng rng(9301);
    double dev = 0;
    for (int it = 0; it < 110; ++it) {
      const int ci = rng.randint(1, 4), groups = rng.uniform() < 0.3 ? ci : 1;
      const int co = groups * rng.randint(1, 3);
      const int kh = rng.randint(1, 3), kw = rng.randint(1, 3);
      const std::array<int, 2> stride{rng.randint(1, 2), rng.randint(1, 2)};
      const std::array<int, 2> pad{rng.randint(0, 1), rng.randint(0, 1)};
      Tensor<double> x = testutil::rand_tensor(rng, {ci, rng.randint(kh, kh + 5), rng.randint(kw, kw + 5)});
      Tensor<double> k = testutil::rand_tensor(rng, {co, ci / groups, kh, kw});
      Tensor<double> b = testutil::rand_tensor(rng, {co});
      std::vector<double> bv(b.data().begin(), b.data().end());
      dev = std::max(dev, oracle::max_abs_diff(conv2d(x, k, b, stride, pad, groups).data(),
                                               oracle::conv2d(x, k, &bv, stride, pad, groups)));
    }
    track(dev, "plane convolution");
  }
  {  // spatial and temporal clip convolutions
    Rng rng(9302);
    double dev_s = 0, dev_t = 0;
    for (int it = 0; it < 110; ++it) {
      const int c = rng.randint(1, 3), co = rng.randint(1, 3);
      Tensor<double> x = testutil::rand_tensor(rng, {c, rng.randint(3, 5), rng.randint(3, 6), rng.randint(3, 6)});
      Tensor<double> ws = testutil::rand_tensor(rng, {co, c, 1, 3, 3});
      Tensor<double> wt = testutil::rand_tensor(rng, {co, c, 3, 1, 1});
      dev_s = std::max(dev_s, oracle::max_abs_diff(conv_spatial(x, ws, kNoBias, {1, 1}, {1, 1}).data(),
                                                   oracle::conv3d(x, ws, nullptr, {1, 1, 1}, {0, 1, 1})));
      dev_t = std::max(dev_t, oracle::max_abs_diff(conv_temporal(x, wt, kNoBias, 1, 1).data(),
                                                   oracle::conv3d(x, wt, nullptr, {1, 1, 1}, {1, 0, 0})));
    }
    track(dev_s, "spatial clip convolution");
    track(dev_t, "temporal clip convolution");
  }
  {  // transposed convolution (decoder upsampling)
    Rng rng(9303);
    double dev = 0;
    for (int it = 0; it < 110; ++it) {
      const int ci = rng.randint(1, 3), co = rng.randint(1, 3);
      const int kt = rng.randint(1, 2), kh = rng.randint(1, 3), kw = rng.randint(1, 3);
      Tensor<double> x = testutil::rand_tensor(rng, {ci, rng.randint(1, 3), rng.randint(1, 4), rng.randint(1, 4)});
      Tensor<double> k = testutil::rand_tensor(rng, {ci, co, kt, kh, kw});
      const std::array<int, 3> stride{rng.randint(1, 2), rng.randint(1, 3), rng.randint(1, 3)};
      dev = std::max(dev, oracle::max_abs_diff(conv_transpose3d(x, k, Tensor<double>{}, stride).data(),
                                               oracle::conv_transpose3d(x, k, nullptr, stride)));
    }
    track(dev, "transposed convolution");
  }
  {  // depthwise cross-correlation
    Rng rng(9304);
    double dev = 0;
    for (int it = 0; it < 110; ++it) {
      const int c = rng.randint(1, 4);
      const int kh = rng.randint(1, 4), kw = rng.randint(1, 4);
      Tensor<double> x = testutil::rand_tensor(rng, {c, rng.randint(kh, kh + 5), rng.randint(kw, kw + 5)});
      Tensor<double> k = testutil::rand_tensor(rng, {c, kh, kw});
      dev = std::max(dev, oracle::max_abs_diff(xcorr_depthwise(x, k).data(), oracle::xcorr_depthwise(x, k)));
    }
    track(dev, "cross-correlation");
  }
  {  // multi-head attention
    Rng rng(9305);
    double dev = 0;
    for (int it = 0; it < 110; ++it) {
      const int heads = rng.randint(1, 3);
      const int c = heads * rng.randint(1, 3);
      ParamStore<double> ps;
      MultiHeadAttention<double> att;
      att.init(ps, "att", rng, c, heads);
      Tensor<double> q = testutil::rand_tensor(rng, {rng.randint(1, 5), c});
      Tensor<double> k = testutil::rand_tensor(rng, {rng.randint(1, 5), c});
      Tensor<double> v = testutil::rand_tensor(rng, {k.extent(0), c});
      dev = std::max(dev, oracle::max_abs_diff(att.forward(q, k, v).data(),
                                               oracle::attention(q, k, v, heads, att.wq, att.bq, att.wk, att.bk,
                                                                 att.wv, att.bv, att.wo, att.bo)));
    }
    track(dev, "attention");
  }
  {  // label assignment
    Rng rng(9306);
    double dev = 0;
    for (int it = 0; it < 110; ++it) {
      const int response = rng.randint(3, 7);
      const int stride = rng.randint(1, 2) * 4;
      const int search = stride * (response + rng.randint(0, 4)) + rng.randint(0, 3);
      const Box gt{rng.uniform(-20, search + 10.0), rng.uniform(-20, search + 10.0), rng.uniform(0.5, search * 1.2),
                   rng.uniform(0.5, search * 1.2)};
      const double cf = rng.uniform(0.2, 0.9);
      const LabelTargets<double> got = assign_labels<double>(gt, GridGeometry{response, stride, search}, cf);
      const oracle::LabelRef want = oracle::assign_labels(gt, response, stride, search, cf);
      check(got.cls1 == want.cls1 && got.positive_rows == want.positive && got.valid == want.valid,
            "label classes diverge from the per-cell reference");
      double d = oracle::max_abs_diff(std::span<const double>(got.cls1_weight), want.weight);
      d = std::max(d, oracle::max_abs_diff(std::span<const double>(got.centerness), want.cen));
      d = std::max(d, oracle::max_abs_diff(std::span<const double>(got.l), want.l));
      d = std::max(d, oracle::max_abs_diff(std::span<const double>(got.t), want.t));
      d = std::max(d, oracle::max_abs_diff(std::span<const double>(got.r), want.r));
      d = std::max(d, oracle::max_abs_diff(std::span<const double>(got.b), want.b));
      dev = std::max(dev, d);
    }
    track(dev, "label assignment");
  }
  {  // precision and success metrics
    Rng rng(9307);
    double dev_p = 0, dev_s = 0;
    for (int it = 0; it < 110; ++it) {
      const int n = rng.randint(1, 12);
      std::vector<Box> r, t;
      for (int i = 0; i < n; ++i) {
        r.push_back({rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(1, 10), rng.uniform(1, 10)});
        t.push_back({rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(1, 10), rng.uniform(1, 10)});
      }
      const double thr = rng.uniform(1, 40);
      dev_p = std::max(dev_p, std::abs(precision_at(r, t, thr) - oracle::precision_at(r, t, thr)));
      const SuccessCurve got = success_auc(r, t);
      const oracle::SuccessRef want = oracle::success(r, t);
      double d = std::abs(got.auc - want.auc);
      for (std::size_t k = 0; k < want.values.size(); ++k) d = std::max(d, std::abs(got.values[k] - want.values[k]));
      dev_s = std::max(dev_s, d);
    }
    track(dev_p, "precision");
    track(dev_s, "success curve");
  }
  return fmt("9 op families x 110 instances each, max |dev| %.2g", overall);
}

// --------------------------------------------------------------------------
// 4: interpolation training beats the copy-first baseline
// --------------------------------------------------------------------------

std::string criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(404);
  const auto train = make_interp_triplets<float>(200, 32, rng);
  const auto val = make_interp_triplets<float>(48, 32, rng);
  const double baseline = copy_first_baseline(val);
  const double target = 0.5 * baseline;

  ClimNetConfig cfg;
  cfg.widths = {8, 16, 32, 64};
  InterpModel<float> model(cfg, 404);

  TrainOptions opt;
  opt.batch = 4;
  opt.momentum = 0.9;
  opt.weight_decay = 1e-4;
  const int chunk = 100, max_steps = 2000;
  int steps = 0;
  double vloss = eval_interp(model.net, val);
  const double initial = vloss;
  while (vloss > target && steps < max_steps) {
    // piecewise-constant leg of a geometric decay from 2e-2 to 2e-3
    opt.lr = opt.lr_end = log_decay_lr(2e-2, 2e-3, steps, max_steps);
    opt.steps = chunk;
    train_interp(model.net, model.params, step_all, train, opt);
    steps += chunk;
    vloss = eval_interp(model.net, val);
  }
  const double secs = seconds_since(t0);
  check(vloss <= target, fmt("validation loss %.3f after %d steps; needs <= %.3f (half of copy-first %.3f)", vloss,
                             steps, target, baseline));
  check(secs <= 600.0, fmt("target reached but run took %.0f s (budget 600 s)", secs));
  return fmt("val loss %.3f <= half of copy-first baseline %.3f after %d steps (start %.3f), %.0f s", vloss, baseline,
             steps, initial, secs);
}

// --------------------------------------------------------------------------
// 5: tracker training dynamics
// --------------------------------------------------------------------------

std::string criterion5() {
  const auto t0 = std::chrono::steady_clock::now();

  // (a) 300 joint steps on one fixed batch halve the composite loss.
  TrackModel<float> model(toy_tracker_config(), 505);
  Rng rng(505);
  SceneConfig base;
  const auto batch_data = make_track_samples<float>(model, base, 4, rng);
  TrainOptions opt;
  opt.steps = 300;
  opt.batch = 4;
  opt.lr = 3e-2;
  opt.lr_end = 3e-3;
  const std::vector<double> curve = train_tracking(model, step_all, batch_data, opt);
  check(curve.back() <= 0.5 * curve.front(),
        fmt("loss fell only from %.3f to %.3f over 300 steps; needs half", curve.front(), curve.back()));

  // (b) overfitting one 30-frame sequence reaches mean IoU >= 0.5 on it.
  TrackModel<float> over(toy_tracker_config(), 506);
  Rng orng(506);
  SceneConfig sc;  // default scene: 30 frames, constant velocity
  const SequenceData<float> seq = generate_sequence<float>(sc, 99);
  const auto seq_data = samples_from_sequence<float>(over, seq, 32, orng);
  TrainOptions oopt;
  oopt.steps = 400;
  oopt.batch = 4;
  oopt.lr = 3e-2;
  oopt.lr_end = 3e-3;
  train_tracking(over, step_all, seq_data, oopt);
  const OpeOutcome<float> ope = run_ope<float>({seq}, model_tracker_factory(over), 1);
  double miou = 0;
  for (std::size_t i = 0; i < seq.truth.size(); ++i) miou += oracle::iou(ope.trajectories[0][i], seq.truth[i]);
  miou /= static_cast<double>(seq.truth.size());
  check(miou >= 0.5, fmt("mean IoU %.3f on the training sequence; needs 0.5", miou));
  return fmt("loss %.3f -> %.3f over 300 steps; overfit mean IoU %.3f, %.0f s total", curve.front(), curve.back(),
             miou, seconds_since(t0));
}

// --------------------------------------------------------------------------
// 6: harness self-checks
// --------------------------------------------------------------------------

std::string criterion6() {
  // Ground-truth oracle tracker scores perfectly.
  std::vector<SequenceData<float>> seqs;
  Rng rng(606);
  for (int i = 0; i < 3; ++i) {
    SceneConfig sc;
    sc.length = 12;
    sc.vel_x = rng.uniform(-1.5, 1.5);
    sc.vel_y = rng.uniform(-1.5, 1.5);
    sc.texture_seed = rng.next_u32();
    seqs.push_back(generate_sequence<float>(sc, 60 + static_cast<std::uint32_t>(i)));
  }
  TrackerFactory<float> oracle_factory = [](const SequenceData<float>& seq) -> StepTracker<float> {
    return [&seq](int t, const Tensor<float>&) { return seq.truth[static_cast<std::size_t>(t)]; };
  };
  const OpeOutcome<float> ope = run_ope<float>(seqs, oracle_factory, 1);
  check(ope.report.precision == 1.0, fmt("oracle tracker precision %.4f, expected 1", ope.report.precision));
  check(std::abs(ope.report.success.auc - 1.0) <= 1.0 / 21 + 1e-12,
        fmt("oracle tracker success AUC %.4f, expected within 1/21 of 1", ope.report.success.auc));

  // The interval sweep emits exactly the configured rows.
  TrackModel<float> model(toy_tracker_config(), 607);
  const std::vector<SequenceData<float>> small(seqs.begin(), seqs.begin() + 1);
  const std::vector<int> m_values{1, 2, 3};
  const std::vector<SweepRow> rows = sweep_m(model, small, m_values, 1);
  check(rows.size() == m_values.size(), fmt("sweep produced %zu rows for %zu intervals", rows.size(), m_values.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    check(rows[i].m == m_values[i], fmt("sweep row %zu holds m=%d, expected %d", i, rows[i].m, m_values[i]));

  // The ablation table has the five variants with a zero baseline delta.
  RunConfig rc;
  rc.template_size = 32;
  rc.search_size = 64;
  rc.backbone_widths = {4, 8, 8, 8, 8};
  rc.token_c = 8;
  rc.heads = 2;
  rc.ffn_mult = 2;
  rc.climnet_widths = {4, 6, 8, 10};
  std::vector<AblationRow> abl;
  for (const std::string& variant : ablation_variant_names()) {
    rc.variant = variant;
    TrackModel<float> vm(tracker_config_from(rc), 608);
    const OpeOutcome<float> vo = run_ope<float>(small, model_tracker_factory(vm), 1);
    abl.push_back({variant, vo.report.precision, vo.report.success.auc, 0, 0});
  }
  abl = ablation_deltas(std::move(abl));
  check(abl.size() == 5, fmt("ablation produced %zu rows, expected 5", abl.size()));
  const auto& names = ablation_variant_names();
  for (std::size_t i = 0; i < abl.size(); ++i)
    check(abl[i].variant == names[i], fmt("ablation row %zu is '%s', expected '%s'", i, abl[i].variant.c_str(),
                                          names[i].c_str()));
  check(abl[0].d_precision == 0.0 && abl[0].d_auc == 0.0, "baseline ablation deltas must be exactly 0");
  return fmt("oracle precision 1.0 / AUC %.4f; sweep rows [1 2 3]; 5 ablation variants, baseline delta 0",
             ope.report.success.auc);
}

// --------------------------------------------------------------------------
// 7: byte-level determinism of the CLI
// --------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = cli + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  const int code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  if (code != 0) fail("command '" + args + "' exited with " + std::to_string(code) + ": " + slurp(log));
}

void require_identical_dirs(const fs::path& a, const fs::path& b, const std::string& what) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  check(fa == fb, what + ": the two runs wrote different file sets");
  for (const fs::path& rel : fa)
    check(slurp(a / rel) == slurp(b / rel), what + ": " + rel.string() + " differs between identical-seed runs");
}

std::string criterion7(const std::string& cli) {
  check(!cli.empty(), "criterion 7 needs the CLI path as the second argument");
  const fs::path base = fs::temp_directory_path() / "clim_acceptance_7";
  fs::remove_all(base);
  fs::create_directories(base);

  RunConfig rc;
  rc.variant = "climnet+lct";
  rc.template_size = 32;
  rc.search_size = 64;
  rc.backbone_widths = {4, 8, 8, 8, 8};
  rc.token_c = 8;
  rc.heads = 2;
  rc.ffn_mult = 2;
  rc.climnet_widths = {4, 6, 8, 10};
  rc.m = 2;
  rc.seq_length = 6;
  rc.n_sequences = 2;
  rc.steps = 2;
  rc.batch = 2;
  rc.seed = 7;
  const fs::path cfg = base / "run.cfg";
  std::ofstream(cfg) << serialize_run_config(rc);
  const std::string with_cfg = "--config " + cfg.string() + " ";

  int commands = 0;
  auto twice = [&](const std::string& name, const std::string& args_template) {
    for (const char* tag : {"a", "b"}) {
      const fs::path out = base / (name + "_" + tag);
      std::string args = args_template;
      const std::string marker = "{out}";
      for (std::size_t at = args.find(marker); at != std::string::npos; at = args.find(marker))
        args.replace(at, marker.size(), out.string());
      run_cli(cli, args, base / (name + "_" + tag + ".log"));
    }
    require_identical_dirs(base / (name + "_a"), base / (name + "_b"), name);
    ++commands;
  };

  twice("synth", with_cfg + "synth --out {out}");
  twice("train", with_cfg + "train-toy --phase tracker --steps 2 --out {out}");

  {  // inputs for the remaining commands come from the first synth/train run
    Rng rng(70);
    Tensor<float> fa = Tensor<float>::zeros({3, 16, 16});
    Tensor<float> fb = Tensor<float>::zeros({3, 16, 16});
    rng.fill_uniform(fa, 0.0, 1.0);
    rng.fill_uniform(fb, 0.0, 1.0);
    save_ppm(base / "a.ppm", fa);
    save_ppm(base / "b.ppm", fb);
  }
  const std::string seq = (base / "synth_a" / "seq_0000").string();
  const std::string weights = (base / "train_a" / "weights").string();
  twice("interp", with_cfg + "interp --a " + (base / "a.ppm").string() + " --b " + (base / "b.ppm").string() +
                      " --out {out}/mid.ppm");
  twice("track", with_cfg + "track --seq " + seq + " --weights " + weights + " --out {out}");
  twice("eval", "eval --seq " + seq + " --results " + (base / "track_a" / "trajectory.txt").string() + " --out {out}");
  twice("sweep", with_cfg + "sweep-m --weights " + weights + " --out {out}");
  twice("ablation", with_cfg + "ablation --out {out}");
  return fmt("%d commands re-run with one seed, all artifacts byte-identical", commands);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1-7> [path-to-cli]\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  const std::string cli = argc > 2 ? argv[2] : "";
  std::string detail;
  try {
    switch (n) {
      case 1: detail = criterion1(); break;
      case 2: detail = criterion2(); break;
      case 3: detail = criterion3(); break;
      case 4: detail = criterion4(); break;
      case 5: detail = criterion5(); break;
      case 6: detail = criterion6(); break;
      case 7: detail = criterion7(cli); break;
      default: std::fprintf(stderr, "usage: acceptance <criterion 1-7> [path-to-cli]\n"); return 2;
    }
  } catch (const std::exception& e) {
    std::printf("criterion %d: FAIL - %s\n", n, e.what());
    return 1;
  }
  std::printf("criterion %d: PASS - %s\n", n, detail.c_str());
  return 0;
}
