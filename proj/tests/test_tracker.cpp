#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "clim/image.hpp"
#include "clim/optim.hpp"
#include "clim/tracker.hpp"
#include "oracles.hpp"

using namespace clim;

namespace {

TrackerConfig toy_config() {
  TrackerConfig cfg;
  cfg.widths = {4, 8, 8, 8, 8};
  cfg.strides = {2, 2, 2, 1, 1};
  cfg.template_size = 32;
  cfg.search_size = 64;
  cfg.m = 2;
  cfg.lct.token_c = 8;
  cfg.lct.heads = 2;
  cfg.lct.ffn_mult = 2;
  cfg.climnet.widths = {4, 6, 8, 10};
  return cfg;
}

void zero_head_stack(HeadStack<double>& hs) {
  testutil::overwrite(hs.w1, 0.0);
  testutil::overwrite(hs.b1, 0.0);
  testutil::overwrite(hs.w2, 0.0);
  testutil::overwrite(hs.b2, 0.0);
}

Tensor<float> rand_frame(Rng& rng, int side) {
  Tensor<float> t = Tensor<float>::zeros({3, side, side});
  rng.fill_uniform(t, 0.0, 1.0);
  return t;
}

HeadOutputs<double> make_heads(int r, double cls1_fill, double cls2_fill, double reg_fill) {
  HeadOutputs<double> h;
  h.cls1 = Tensor<double>::full({2, r, r}, cls1_fill);
  h.cls2 = Tensor<double>::full({1, r, r}, cls2_fill);
  h.reg = Tensor<double>::full({4, r, r}, reg_fill);
  return h;
}

}  // namespace

TEST_CASE("response-grid geometry follows the stride pyramid") {
  TrackerConfig cfg;  // defaults: widths 32..128, strides 2,2,2,1,1, 127/287
  REQUIRE(cfg.total_stride() == 8);
  REQUIRE(cfg.feature_extent(127) == 16);
  REQUIRE(cfg.feature_extent(287) == 36);
  REQUIRE(cfg.response_extent() == 21);

  GridGeometry g{cfg.response_extent(), cfg.total_stride(), cfg.search_size};
  // Middle cell sits at the crop centre; neighbours are one stride apart.
  REQUIRE(g.cell_center(10) == Catch::Approx(143.5).margin(1e-12));
  REQUIRE(g.cell_center(11) - g.cell_center(10) == Catch::Approx(8.0).margin(1e-12));
  REQUIRE(g.cell_center(0) == Catch::Approx(143.5 - 80.0).margin(1e-12));
}

TEST_CASE("crop map round-trips between frame and crop coordinates") {
  const Box box = Box::from_center(50, 40, 12, 20);
  const CropMap cm = make_crop_map(box, 0.5, 64, 2.0);
  REQUIRE(cm.cx == Catch::Approx(50.0));
  REQUIRE(cm.cy == Catch::Approx(40.0));
  const double c = 0.5 * (12 + 20) / 2.0;
  REQUIRE(cm.side == Catch::Approx(std::sqrt((12 + 2 * c) * (20 + 2 * c)) * 2.0).margin(1e-12));

  Rng rng(11);
  for (int it = 0; it < 20; ++it) {
    Box b{rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(1, 40), rng.uniform(1, 40)};
    Box rt = cm.to_frame(cm.to_crop(b));
    REQUIRE(rt.x == Catch::Approx(b.x).margin(1e-9));
    REQUIRE(rt.y == Catch::Approx(b.y).margin(1e-9));
    REQUIRE(rt.w == Catch::Approx(b.w).margin(1e-9));
    REQUIRE(rt.h == Catch::Approx(b.h).margin(1e-9));
  }
}

TEST_CASE("crop of the exact frame extent is an identity copy") {
  // Box w=h=S/2 centred at S/2 with context 0.5 gives side exactly S, so the
  // sampling grid lands on pixel centres and bilinear weights collapse.
  const int s = 32;
  Rng rng(5);
  Tensor<double> frame = testutil::rand_tensor(rng, {3, s, s}, 0.0, 1.0);
  Tensor<double> crop = crop_patch(frame, Box::from_center(s / 2.0, s / 2.0, s / 2.0, s / 2.0), 0.5, s);
  REQUIRE(crop.shape() == Shape{3, s, s});
  for (std::size_t i = 0; i < crop.numel(); ++i)
    REQUIRE(crop.data()[i] == Catch::Approx(frame.data()[i]).margin(1e-12));
}

TEST_CASE("crop fully outside the frame equals the channel means") {
  Rng rng(6);
  Tensor<double> frame = testutil::rand_tensor(rng, {3, 8, 8}, 0.0, 1.0);
  const auto mean = channel_means(frame);
  Tensor<double> crop = crop_patch(frame, Box{100, 100, 4, 4}, 0.5, 6);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 36; ++i)
      REQUIRE(crop.data()[static_cast<std::size_t>(c) * 36 + static_cast<std::size_t>(i)] ==
              Catch::Approx(static_cast<double>(mean[static_cast<std::size_t>(c)])).margin(1e-12));
}

TEST_CASE("crop rejects degenerate requests") {
  Tensor<double> frame = Tensor<double>::zeros({3, 8, 8});
  REQUIRE_THROWS_AS(crop_patch(frame, Box{0, 0, 0, 4}, 0.5, 8), GeometryError);
  REQUIRE_THROWS_AS(crop_patch(frame, Box{0, 0, 4, 4}, 0.5, 0), GeometryError);
  REQUIRE_THROWS_AS(crop_patch(frame, Box{0, 0, 4, 4}, 0.5, 8, -1.0), GeometryError);
  REQUIRE_THROWS_AS(crop_patch(Tensor<double>::zeros({1, 8, 8}), Box{0, 0, 4, 4}, 0.5, 8), ShapeError);
}

TEST_CASE("crop matches a canvas-materialised bilinear reference") {
  Rng rng(77);
  for (int it = 0; it < 110; ++it) {
    Tensor<double> frame = testutil::rand_tensor(rng, {3, 12, 12}, 0.0, 1.0);
    Box box{rng.uniform(-8, 14), rng.uniform(-8, 14), rng.uniform(0.5, 10), rng.uniform(0.5, 10)};
    const double context = rng.uniform(0.0, 1.0);
    const int out_size = rng.randint(4, 16);
    const double region_scale = rng.uniform(0.5, 2.0);
    Tensor<double> got = crop_patch(frame, box, context, out_size, region_scale);
    std::vector<double> want = oracle::crop_patch(frame, box, context, out_size, region_scale);
    REQUIRE(oracle::max_abs_diff(got.data(), want) <= 1e-9);
  }
}

TEST_CASE("backbone produces the declared feature extents") {
  TrackerConfig cfg = toy_config();
  ParamStore<double> ps;
  Rng rng(3);
  Backbone<double> bb;
  bb.init(ps, "backbone", rng, cfg);
  REQUIRE(ps.size() == 10);

  auto [f4, f5] = bb.forward(Tensor<double>::zeros({3, 32, 32}));
  REQUIRE(f4.shape() == Shape{8, 4, 4});
  REQUIRE(f5.shape() == Shape{8, 4, 4});
  auto [g4, g5] = bb.forward(Tensor<double>::zeros({3, 64, 64}));
  REQUIRE(g4.shape() == Shape{8, 8, 8});
  REQUIRE(g5.shape() == Shape{8, 8, 8});
  REQUIRE(cfg.feature_extent(32) == 4);
  REQUIRE(cfg.feature_extent(64) == 8);
}

TEST_CASE("backbone rejects crops of unexpected size") {
  TrackerConfig cfg = toy_config();
  ParamStore<double> ps;
  Rng rng(3);
  Backbone<double> bb;
  bb.init(ps, "backbone", rng, cfg);
  REQUIRE_THROWS_AS(bb.forward(Tensor<double>::zeros({3, 20, 20})), GeometryError);
  REQUIRE_THROWS_AS(bb.forward(Tensor<double>::zeros({3, 32, 64})), GeometryError);
}

TEST_CASE("backbone with zeroed weights maps everything to zero") {
  TrackerConfig cfg = toy_config();
  ParamStore<double> ps;
  Rng rng(3);
  Backbone<double> bb;
  bb.init(ps, "backbone", rng, cfg);
  for (auto& [name, t] : ps.items()) testutil::overwrite(t, 0.0);
  Rng rng2(4);
  auto [f4, f5] = bb.forward(testutil::rand_tensor(rng2, {3, 32, 32}, 0.0, 1.0));
  for (double v : f4.data()) REQUIRE(v == 0.0);
  for (double v : f5.data()) REQUIRE(v == 0.0);
}

TEST_CASE("backbone forward is bit-deterministic") {
  TrackerConfig cfg = toy_config();
  ParamStore<double> ps;
  Rng rng(9);
  Backbone<double> bb;
  bb.init(ps, "backbone", rng, cfg);
  Rng rng2(10);
  Tensor<double> img = testutil::rand_tensor(rng2, {3, 64, 64}, 0.0, 1.0);
  auto [a4, a5] = bb.forward(img);
  auto [b4, b5] = bb.forward(img);
  for (std::size_t i = 0; i < a5.numel(); ++i) REQUIRE(a5.data()[i] == b5.data()[i]);
  for (std::size_t i = 0; i < a4.numel(); ++i) REQUIRE(a4.data()[i] == b4.data()[i]);
}

TEST_CASE("prediction heads emit class, centerness, and positive box maps") {
  ParamStore<double> ps;
  Rng rng(2);
  Heads<double> heads;
  heads.init(ps, "heads", rng, 6, 4);
  Rng rng2(3);
  HeadOutputs<double> out = heads.forward(testutil::rand_tensor(rng2, {6, 5, 5}));
  REQUIRE(out.cls1.shape() == Shape{2, 5, 5});
  REQUIRE(out.cls2.shape() == Shape{1, 5, 5});
  REQUIRE(out.reg.shape() == Shape{4, 5, 5});
  for (double v : out.reg.data()) REQUIRE(v > 0.0);  // distances come out of exp

  zero_head_stack(heads.cls1);
  zero_head_stack(heads.cls2);
  zero_head_stack(heads.reg);
  HeadOutputs<double> z = heads.forward(testutil::rand_tensor(rng2, {6, 5, 5}));
  for (double v : z.cls1.data()) REQUIRE(v == 0.0);
  for (double v : z.cls2.data()) REQUIRE(v == 0.0);
  for (double v : z.reg.data()) REQUIRE(v == 1.0);  // exp(0)
}

TEST_CASE("label assignment marks centre, ring, and background cells") {
  // 5x5 grid, stride 8, search 64: cell centres at {16,24,32,40,48}.
  GridGeometry g{5, 8, 64};
  const Box gt = Box::from_center(32, 32, 20, 20);
  LabelTargets<double> lt = assign_labels<double>(gt, g, 0.6);

  REQUIRE(lt.positive_rows.size() == 1);
  REQUIRE(lt.positive_rows[0] == 12);  // row-major (2,2)
  REQUIRE(lt.cls1[12] == 1);
  REQUIRE(lt.centerness[12] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(lt.l[12] == Catch::Approx(10.0 / 8).margin(1e-12));
  REQUIRE(lt.t[12] == Catch::Approx(10.0 / 8).margin(1e-12));
  REQUIRE(lt.r[12] == Catch::Approx(10.0 / 8).margin(1e-12));
  REQUIRE(lt.b[12] == Catch::Approx(10.0 / 8).margin(1e-12));

  // Cells inside gt but outside the central band are ignored: the 3x3 block
  // of interior centres minus the one positive.
  int ignored = 0, positives = 0;
  for (std::size_t i = 0; i < lt.cls1_weight.size(); ++i) {
    if (lt.cls1_weight[i] == 0.0) ++ignored;
    if (lt.cls1[i] == 1) ++positives;
  }
  REQUIRE(ignored == 8);
  REQUIRE(positives == 1);
  REQUIRE(lt.valid == 17);
}

TEST_CASE("label assignment with gt outside the crop is all background") {
  GridGeometry g{5, 8, 64};
  LabelTargets<double> lt = assign_labels<double>(Box{1000, 1000, 10, 10}, g);
  REQUIRE(lt.positive_rows.empty());
  REQUIRE(lt.valid == 25);
  for (int c : lt.cls1) REQUIRE(c == 0);
  for (double w : lt.cls1_weight) REQUIRE(w == 1.0);
}

TEST_CASE("label assignment with a degenerate gt is all background") {
  GridGeometry g{5, 8, 64};
  LabelTargets<double> lt = assign_labels<double>(Box{10, 10, 0, 10}, g);
  REQUIRE(lt.positive_rows.empty());
  REQUIRE(lt.valid == 25);
}

TEST_CASE("label assignment covering every centre is all positive") {
  GridGeometry g{5, 8, 64};
  // Centres span [16,48]; the central 60% band of a box centred at 32 must
  // reach +-16, so any width >= 54 works. Use a big margin.
  LabelTargets<double> lt = assign_labels<double>(Box::from_center(32, 32, 200, 200), g);
  REQUIRE(lt.positive_rows.size() == 25);
  REQUIRE(lt.valid == 25);
  for (double c : lt.centerness) REQUIRE((c > 0.0 && c <= 1.0));
}

TEST_CASE("label assignment matches the per-cell reference") {
  Rng rng(41);
  for (int it = 0; it < 110; ++it) {
    const int response = rng.randint(3, 7);
    const int stride = rng.randint(1, 2) * 4;
    const int search = stride * (response + rng.randint(0, 4)) + rng.randint(0, 3);
    GridGeometry g{response, stride, search};
    Box gt{rng.uniform(-20, search + 10.0), rng.uniform(-20, search + 10.0), rng.uniform(0.5, search * 1.2),
           rng.uniform(0.5, search * 1.2)};
    const double cf = rng.uniform(0.2, 0.9);
    LabelTargets<double> got = assign_labels<double>(gt, g, cf);
    oracle::LabelRef want = oracle::assign_labels(gt, response, stride, search, cf);
    REQUIRE(got.cls1 == want.cls1);
    REQUIRE(got.positive_rows == want.positive);
    REQUIRE(got.valid == want.valid);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.cls1_weight), want.weight) <= 1e-12);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.centerness), want.cen) <= 1e-9);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.l), want.l) <= 1e-9);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.t), want.t) <= 1e-9);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.r), want.r) <= 1e-9);
    REQUIRE(oracle::max_abs_diff(std::span<const double>(got.b), want.b) <= 1e-9);
  }
}

TEST_CASE("tracking loss is near zero for confident correct predictions") {
  GridGeometry g{5, 8, 64};
  const Box gt = Box::from_center(32, 32, 20, 20);
  LabelTargets<double> lt = assign_labels<double>(gt, g, 0.6);

  HeadOutputs<double> h = make_heads(5, 0.0, 50.0, 10.0 / 8);
  double* c1 = h.cls1.raw_mut();
  for (std::size_t i = 0; i < 25; ++i) {
    const bool pos = lt.cls1[i] == 1;
    c1[i] = pos ? 0.0 : 50.0;        // background logit
    c1[25 + i] = pos ? 50.0 : 0.0;   // foreground logit
  }
  // Ignored cells keep whatever the head said; make them maximally wrong to
  // prove the zero weights really exclude them.
  for (std::size_t i = 0; i < 25; ++i)
    if (lt.cls1_weight[i] == 0.0) {
      c1[i] = -100.0;
      c1[25 + i] = 100.0;
    }

  LossBreakdown<double> lb = tracking_loss(h, lt, 1.0, 1.0, 3.0);
  REQUIRE(lb.has_positives);
  REQUIRE(lb.ce <= 1e-6);
  REQUIRE(lb.bce <= 1e-6);  // centerness target is exactly 1 at the positive
  REQUIRE(lb.loc <= 1e-9);
  REQUIRE(lb.total.item() <= 1e-5);
}

TEST_CASE("tracking loss reproduces a hand-computed overlap case") {
  // One cell at (1.5, 1.5) of a 3px crop. Truth box [0,0]..[2,2]; predicted
  // distances place the box at [1,0]..[3,2]. Overlap 2, union 6, IoU 1/3.
  GridGeometry g{1, 1, 3};
  LabelTargets<double> lt = assign_labels<double>(Box{0, 0, 2, 2}, g, 0.6);
  REQUIRE(lt.positive_rows == std::vector<int>{0});
  REQUIRE(lt.centerness[0] == Catch::Approx(1.0 / 3).margin(1e-12));

  HeadOutputs<double> h;
  h.cls1 = Tensor<double>::zeros({2, 1, 1});
  h.cls2 = Tensor<double>::zeros({1, 1, 1});
  h.reg = Tensor<double>::from_data({4, 1, 1}, {0.5, 1.5, 1.5, 0.5});  // l,t,r,b

  LossBreakdown<double> lb = tracking_loss(h, lt, 1.0, 1.0, 3.0);
  const double ln2 = std::log(2.0);
  REQUIRE(lb.ce == Catch::Approx(ln2).margin(1e-12));
  REQUIRE(lb.bce == Catch::Approx(ln2).margin(1e-12));  // logit 0 vs any target
  REQUIRE(lb.loc == Catch::Approx(2.0 / 3).margin(1e-12));
  REQUIRE(lb.total.item() == Catch::Approx(2 * ln2 + 3.0 * 2 / 3).margin(1e-9));
}

TEST_CASE("tracking loss without positives reduces to the classification term") {
  GridGeometry g{3, 8, 24};
  LabelTargets<double> lt = assign_labels<double>(Box{500, 500, 4, 4}, g);
  REQUIRE(lt.positive_rows.empty());

  HeadOutputs<double> h = make_heads(3, 0.0, 0.0, 1.0);
  LossBreakdown<double> lb = tracking_loss(h, lt, 2.0, 1.0, 3.0);
  REQUIRE_FALSE(lb.has_positives);
  REQUIRE(lb.bce == 0.0);
  REQUIRE(lb.loc == 0.0);
  REQUIRE(lb.ce == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(lb.total.item() == Catch::Approx(2.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("tracking loss backpropagates into every head map") {
  GridGeometry g{5, 8, 64};
  LabelTargets<double> lt = assign_labels<double>(Box::from_center(32, 32, 20, 20), g, 0.6);
  Rng rng(8);
  HeadOutputs<double> h;
  h.cls1 = testutil::rand_tensor(rng, {2, 5, 5});
  h.cls2 = testutil::rand_tensor(rng, {1, 5, 5});
  h.reg = testutil::rand_tensor(rng, {4, 5, 5}, 0.5, 2.0);
  h.cls1.set_requires_grad(true);
  h.cls2.set_requires_grad(true);
  h.reg.set_requires_grad(true);

  LossBreakdown<double> lb = tracking_loss(h, lt, 1.0, 1.0, 3.0);
  backward(lb.total);
  REQUIRE(h.cls1.has_grad());
  REQUIRE(h.cls2.has_grad());
  REQUIRE(h.reg.has_grad());
  for (double v : h.cls1.grad()) REQUIRE(std::isfinite(v));
  for (double v : h.reg.grad()) REQUIRE(std::isfinite(v));
}

TEST_CASE("tracking loss rejects mismatched grid sizes") {
  GridGeometry g{5, 8, 64};
  LabelTargets<double> lt = assign_labels<double>(Box::from_center(32, 32, 20, 20), g, 0.6);
  HeadOutputs<double> h = make_heads(3, 0.0, 0.0, 1.0);
  REQUIRE_THROWS_AS(tracking_loss(h, lt, 1.0, 1.0, 3.0), ShapeError);
}

TEST_CASE("bbox decoding reads the argmax cell and spans its distances") {
  GridGeometry g{3, 8, 48};  // centres (j-1)*8 + 24
  HeadOutputs<double> h = make_heads(3, 0.0, 0.0, 1.0);
  double* fg = h.cls1.raw_mut() + 9;
  for (int i = 0; i < 9; ++i) fg[i] = -10.0;
  fg[7] = 10.0;  // cell (2,1)
  double* reg = h.reg.raw_mut();
  reg[0 * 9 + 7] = 0.5;   // l
  reg[1 * 9 + 7] = 0.25;  // t
  reg[2 * 9 + 7] = 1.0;   // r
  reg[3 * 9 + 7] = 0.75;  // b

  Box b = decode_bbox(h, g);
  REQUIRE(b.x == Catch::Approx(24 - 0.5 * 8).margin(1e-12));
  REQUIRE(b.y == Catch::Approx(32 - 0.25 * 8).margin(1e-12));
  REQUIRE(b.w == Catch::Approx((0.5 + 1.0) * 8).margin(1e-12));
  REQUIRE(b.h == Catch::Approx((0.25 + 0.75) * 8).margin(1e-12));
}

TEST_CASE("bbox decoding with symmetric distances centres on the cell") {
  GridGeometry g{3, 8, 48};
  HeadOutputs<double> h = make_heads(3, 0.0, 0.0, 0.5);
  h.cls1.raw_mut()[9 + 4] = 5.0;  // foreground peak at the middle cell (1,1)
  Box b = decode_bbox(h, g);
  REQUIRE(b.cx() == Catch::Approx(24.0).margin(1e-12));
  REQUIRE(b.cy() == Catch::Approx(24.0).margin(1e-12));
  REQUIRE(b.w == Catch::Approx(8.0).margin(1e-12));
}

TEST_CASE("bbox decoding breaks score ties towards the first cell") {
  GridGeometry g{3, 8, 48};
  HeadOutputs<double> h = make_heads(3, 0.0, 0.0, 1.0);
  Box b = decode_bbox(h, g);  // all scores equal
  REQUIRE(b.cx() == Catch::Approx(16.0).margin(1e-12));
  REQUIRE(b.cy() == Catch::Approx(16.0).margin(1e-12));
}

TEST_CASE("bbox decoding is invariant to a shared logit shift") {
  GridGeometry g{5, 8, 64};
  Rng rng(23);
  for (int it = 0; it < 20; ++it) {
    HeadOutputs<double> h;
    h.cls1 = testutil::rand_tensor(rng, {2, 5, 5}, -3, 3);
    h.cls2 = testutil::rand_tensor(rng, {1, 5, 5}, -3, 3);
    h.reg = testutil::rand_tensor(rng, {4, 5, 5}, 0.1, 2.0);
    Box a = decode_bbox(h, g);

    HeadOutputs<double> h2 = h;
    h2.cls1 = add(h.cls1, Tensor<double>::full({2, 5, 5}, 7.25));
    Box b = decode_bbox(h2, g);
    REQUIRE(a.x == Catch::Approx(b.x).margin(1e-9));
    REQUIRE(a.y == Catch::Approx(b.y).margin(1e-9));
    REQUIRE(a.w == Catch::Approx(b.w).margin(1e-9));
    REQUIRE(a.h == Catch::Approx(b.h).margin(1e-9));
  }
}

TEST_CASE("box clamping keeps centres and extents inside the frame") {
  Box a = clamp_box(Box{-10, -10, 4, 4}, 100, 100);
  REQUIRE(a.cx() == 0.0);
  REQUIRE(a.cy() == 0.0);
  REQUIRE(a.w == 4.0);

  Box b = clamp_box(Box{5, 5, 0.25, 300}, 100, 100);
  REQUIRE(b.w == 1.0);
  REQUIRE(b.h == 100.0);
  REQUIRE(b.cx() == Catch::Approx(5.125).margin(1e-12));
  REQUIRE(b.cy() == 100.0);
}

TEST_CASE("sgd without momentum subtracts the gradient") {
  ParamStore<double> ps;
  Rng rng(1);
  Tensor<double> p = ps.add("p", Tensor<double>::from_data({2}, {2.0, 3.0}));
  backward(reduce_sum(mul(p, p)));  // grad = 2p
  std::map<std::string, std::vector<double>> vel;
  sgd_step<double>("p", p, 1.0, 0.0, 0.0, vel);
  REQUIRE(p.data()[0] == Catch::Approx(-2.0).margin(1e-12));
  REQUIRE(p.data()[1] == Catch::Approx(-3.0).margin(1e-12));
}

TEST_CASE("sgd momentum and weight decay follow the update recurrence") {
  // v1 = g1 + wd*p0; p1 = p0 - lr*v1; v2 = mu*v1 + g2 + wd*p1; p2 = p1 - lr*v2
  const double lr = 0.1, mu = 0.9, wd = 0.01;
  ParamStore<double> ps;
  Tensor<double> p = ps.add("p", Tensor<double>::from_data({1}, {1.0}));
  Sgd<double> opt(lr, mu, wd);

  auto loss = [&] { return scale(reduce_sum(p), 3.0); };  // grad = 3
  double pv = 1.0, v = 0.0;
  for (int step = 0; step < 3; ++step) {
    backward(loss());
    opt.step(ps);
    v = mu * v + 3.0 + wd * pv;
    pv -= lr * v;
    REQUIRE(p.data()[0] == Catch::Approx(pv).margin(1e-12));
    REQUIRE_FALSE(p.has_grad());  // step clears gradients
  }
}

TEST_CASE("sgd refuses to step a parameter that has no gradient") {
  ParamStore<double> ps;
  ps.add("w", Tensor<double>::ones({2}));
  Sgd<double> opt(0.1);
  REQUIRE_THROWS_AS(opt.step(ps), AutogradError);
}

TEST_CASE("selective stepping clears every gradient but moves only matches") {
  ParamStore<double> ps;
  Tensor<double> a = ps.add("enc.w", Tensor<double>::from_data({1}, {1.0}));
  Tensor<double> b = ps.add("dec.w", Tensor<double>::from_data({1}, {1.0}));
  backward(reduce_sum(add(a, b)));
  Sgd<double> opt(1.0, 0.0, 0.0);
  opt.step_matching(ps, [](const std::string& n) { return n.rfind("enc.", 0) == 0; });
  REQUIRE(a.data()[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(b.data()[0] == 1.0);
  REQUIRE_FALSE(a.has_grad());
  REQUIRE_FALSE(b.has_grad());
}

TEST_CASE("learning-rate schedule decays geometrically to the end value") {
  REQUIRE(log_decay_lr(1e-2, 1e-4, 0, 5) == Catch::Approx(1e-2).margin(1e-15));
  REQUIRE(log_decay_lr(1e-2, 1e-4, 4, 5) == Catch::Approx(1e-4).margin(1e-15));
  REQUIRE(log_decay_lr(1e-2, 1e-4, 2, 5) == Catch::Approx(1e-3).margin(1e-12));
  REQUIRE(log_decay_lr(1e-2, 1e-4, 0, 1) == 1e-2);
  // Monotone decreasing across the run.
  double prev = 1e-1;
  for (int s = 0; s < 10; ++s) {
    const double lr = log_decay_lr(1e-2, 1e-5, s, 10);
    REQUIRE(lr < prev);
    prev = lr;
  }
}

TEST_CASE("track model construction validates its configuration") {
  TrackerConfig bad = toy_config();
  bad.widths[3] = 4;  // correlation responses must share channels
  REQUIRE_THROWS_AS(TrackModel<double>(bad, 1), ShapeError);

  TrackerConfig cfg = toy_config();
  TrackModel<double> model(cfg, 1);
  REQUIRE_THROWS_AS(model.set_m(0), GeometryError);
  model.set_m(3);
  REQUIRE(model.config().m == 3);
  GridGeometry g = model.grid();
  REQUIRE(g.response == 5);
  REQUIRE(g.stride == 8);
  REQUIRE(g.search == 64);
}

TEST_CASE("latent frame is a passthrough when interpolation is disabled") {
  TrackerConfig cfg = toy_config();
  cfg.use_latent = false;
  TrackModel<double> model(cfg, 1);
  Tensor<double> a = Tensor<double>::zeros({3, 64, 64});
  Tensor<double> b = Tensor<double>::ones({3, 64, 64});
  REQUIRE(model.latent_frame(a, b).same_storage(b));
}

TEST_CASE("tracking a sequence keeps the crop history in lockstep") {
  TrackerConfig cfg = toy_config();
  TrackModel<float> model(cfg, 5);

  Rng rng(17);
  Tensor<float> frame = rand_frame(rng, 96);
  TrackState<float> st = init_track(model, frame, Box::from_center(48, 48, 20, 24));
  REQUIRE(st.frame_index == 0);
  REQUIRE(st.recent.size() == 1);
  REQUIRE(st.recent.front().first == 0);

  for (int t = 1; t <= 4; ++t) {
    Box b = track_step(model, st, frame);
    REQUIRE(st.frame_index == t);
    REQUIRE(std::isfinite(b.x));
    REQUIRE(b.w >= 1.0);
    REQUIRE(b.h >= 1.0);
    REQUIRE((b.cx() >= 0 && b.cx() <= 96 && b.cy() >= 0 && b.cy() <= 96));
    REQUIRE(static_cast<int>(st.recent.size()) == std::min(t + 1, cfg.m));
    REQUIRE(st.recent.back().first == t);
  }
  // With m=2 the retained crop is always the immediately preceding frame.
  REQUIRE(st.recent.front().first == 3);
}

TEST_CASE("tracking raises when the crop history indices drift") {
  TrackerConfig cfg = toy_config();
  TrackModel<float> model(cfg, 5);
  Rng rng(18);
  Tensor<float> frame = rand_frame(rng, 96);
  TrackState<float> st = init_track(model, frame, Box::from_center(48, 48, 20, 24));
  track_step(model, st, frame);
  REQUIRE(st.recent.size() == 2);
  st.recent.front().first = 99;
  REQUIRE_THROWS_AS(track_step(model, st, frame), AutogradError);
}

TEST_CASE("tracking the same frame from the same state is bit-identical") {
  TrackerConfig cfg = toy_config();
  TrackModel<float> model(cfg, 5);
  Rng rng(19);
  Tensor<float> f0 = rand_frame(rng, 96);
  Tensor<float> f1 = rand_frame(rng, 96);

  TrackState<float> st = init_track(model, f0, Box::from_center(48, 48, 20, 24));
  track_step(model, st, f1);

  TrackState<float> fork = st;  // crops are shared read-only
  Box a = track_step(model, st, f1);
  Box b = track_step(model, fork, f1);
  REQUIRE(a.x == b.x);
  REQUIRE(a.y == b.y);
  REQUIRE(a.w == b.w);
  REQUIRE(a.h == b.h);
}
