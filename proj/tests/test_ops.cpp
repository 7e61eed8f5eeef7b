#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "clim/ops.hpp"
#include "clim/rng.hpp"
#include "oracles.hpp"

using namespace clim;

TEST_CASE("sigmoid at zero is exactly one half") {
  Tensor<double> x = Tensor<double>::zeros({3});
  Tensor<double> s = sigmoid(x);
  for (double v : s.data()) REQUIRE(v == 0.5);
}

TEST_CASE("elementwise forward values") {
  Tensor<double> x = Tensor<double>::from_data({4}, {-2, -0.5, 0.5, 2});
  Tensor<double> y = Tensor<double>::from_data({4}, {1, 2, 4, -4});
  REQUIRE(add(x, y).at({0}) == -1.0);
  REQUIRE(sub(x, y).at({3}) == 6.0);
  REQUIRE(mul(x, y).at({2}) == 2.0);
  REQUIRE(div(x, y).at({1}) == -0.25);
  REQUIRE(neg(x).at({0}) == 2.0);
  REQUIRE(abs(x).at({0}) == 2.0);
  REQUIRE(relu(x).at({0}) == 0.0);
  REQUIRE(relu(x).at({3}) == 2.0);
  REQUIRE(scale(x, 3.0).at({2}) == 1.5);
  REQUIRE(add_scalar(x, 1.0).at({1}) == 0.5);
  REQUIRE(exp(Tensor<double>::zeros({1})).item() == 1.0);
  REQUIRE(log(Tensor<double>::ones({1})).item() == 0.0);
  REQUIRE(minimum(x, y).at({0}) == -2.0);
  REQUIRE(maximum(x, y).at({0}) == 1.0);
  REQUIRE_THROWS_AS(add(x, Tensor<double>::ones({3})), ShapeError);
}

TEST_CASE("abs uses subgradient zero at the kink") {
  Tensor<double> x = Tensor<double>::zeros({1});
  x.set_requires_grad(true);
  backward(reduce_sum(abs(x)));
  REQUIRE(x.grad()[0] == 0.0);
}

TEST_CASE("minimum/maximum ties route the gradient to the first operand") {
  Tensor<double> a = Tensor<double>::full({2}, 3.0);
  Tensor<double> b = Tensor<double>::full({2}, 3.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  backward(reduce_sum(maximum(a, b)));
  for (double g : a.grad()) REQUIRE(g == 1.0);
  for (double g : b.grad()) REQUIRE(g == 0.0);
  a.zero_grad();
  b.zero_grad();
  backward(reduce_sum(minimum(a, b)));
  for (double g : a.grad()) REQUIRE(g == 1.0);
  for (double g : b.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("softmax of a constant row is uniform") {
  for (int n : {2, 3, 7}) {
    Tensor<double> x = Tensor<double>::full({1, n}, 1.7);
    Tensor<double> sm = softmax(x, 1);
    for (double v : sm.data()) REQUIRE(v == Catch::Approx(1.0 / n).margin(1e-6));
  }
}

TEST_CASE("softmax rows sum to one and are non-negative") {
  Rng rng(11);
  Tensor<double> x = testutil::rand_tensor(rng, {5, 9}, -30.0, 30.0);
  Tensor<double> s = softmax(x, 1);
  for (int i = 0; i < 5; ++i) {
    double row = 0;
    for (int j = 0; j < 9; ++j) {
      REQUIRE(s.at({i, j}) >= 0.0);
      row += s.at({i, j});
    }
    REQUIRE(row == Catch::Approx(1.0).margin(1e-6));
  }
  // shift invariance
  Tensor<double> s2 = softmax(add_scalar(x, 13.5), 1);
  REQUIRE(testutil::all_close(s.data(), s2.data(), 1e-9));
  REQUIRE_THROWS_AS(softmax(x, 2), ShapeError);
}

TEST_CASE("matmul against the identity leaves the operand unchanged") {
  Rng rng(12);
  Tensor<double> x = testutil::rand_tensor(rng, {3, 4});
  Tensor<double> eye = Tensor<double>::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.raw_mut()[i * 4 + i] = 1.0;
  Tensor<double> y = matmul(x, eye);
  REQUIRE(testutil::all_close(x.data(), y.data(), 0.0));
}

TEST_CASE("matmul handles transposed operands") {
  Tensor<double> a = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> b = Tensor<double>::from_data({2, 3}, {1, 0, 1, 0, 1, 0});
  // a * b^T: row0 = (1+3, 2), row1 = (4+6, 5)
  Tensor<double> c = matmul(a, b, false, true);
  REQUIRE(c.extent(0) == 2);
  REQUIRE(c.extent(1) == 2);
  REQUIRE(c.at({0, 0}) == 4.0);
  REQUIRE(c.at({0, 1}) == 2.0);
  REQUIRE(c.at({1, 0}) == 10.0);
  REQUIRE(c.at({1, 1}) == 5.0);
  Tensor<double> d = matmul(a, a, true, false);  // (3,3)
  REQUIRE(d.at({0, 0}) == 17.0);
  REQUIRE_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("layer_norm rows have near-zero mean and unit variance") {
  Rng rng(13);
  Tensor<double> x = testutil::rand_tensor(rng, {6, 16}, -3.0, 5.0);
  Tensor<double> gamma = Tensor<double>::ones({16});
  Tensor<double> beta = Tensor<double>::zeros({16});
  Tensor<double> y = layer_norm(x, gamma, beta);
  for (int i = 0; i < 6; ++i) {
    double mean = 0, var = 0;
    for (int j = 0; j < 16; ++j) mean += y.at({i, j});
    mean /= 16;
    for (int j = 0; j < 16; ++j) var += (y.at({i, j}) - mean) * (y.at({i, j}) - mean);
    var /= 16;
    REQUIRE(std::abs(mean) <= 1e-5);
    REQUIRE(std::abs(var - 1.0) <= 1e-4);
  }
  // affine parameters shift and scale the normalized rows
  Tensor<double> g2 = Tensor<double>::full({16}, 2.0);
  Tensor<double> b3 = Tensor<double>::full({16}, 3.0);
  Tensor<double> y2 = layer_norm(x, g2, b3);
  for (int j = 0; j < 16; ++j) REQUIRE(y2.at({0, j}) == Catch::Approx(2.0 * y.at({0, j}) + 3.0).margin(1e-9));
}

TEST_CASE("pool_global of a constant tensor returns the constant in both modes") {
  Tensor<double> x = Tensor<double>::full({2, 3, 4, 4}, 5.0);
  for (PoolMode mode : {PoolMode::Avg, PoolMode::Max}) {
    Tensor<double> sp = pool_global(x, mode, PoolAxes::Spatial);
    REQUIRE(sp.extent(0) == 2);
    REQUIRE(sp.extent(1) == 3);
    for (double v : sp.data()) REQUIRE(v == 5.0);
    // reduced axes are dropped: (C,T,H,W) -> (C)
    Tensor<double> st = pool_global(x, mode, PoolAxes::Spatiotemporal);
    REQUIRE(st.ndim() == 1);
    REQUIRE(st.extent(0) == 2);
    for (double v : st.data()) REQUIRE(v == 5.0);
  }
  REQUIRE_THROWS_AS(pool_global(Tensor<double>::ones({2, 3, 4}), PoolMode::Avg, PoolAxes::Spatial), ShapeError);
}

TEST_CASE("average pool of {1,2,3,4} is 2.5") {
  Tensor<double> x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  REQUIRE(pool_global(x, PoolMode::Avg, PoolAxes::Spatial).item() == 2.5);
  REQUIRE(pool_global(x, PoolMode::Max, PoolAxes::Spatial).item() == 4.0);
}

TEST_CASE("max pool routes the gradient to the unique maximum") {
  Tensor<double> x = Tensor<double>::from_data({1, 1, 2, 2}, {1, 7, 3, 4});
  x.set_requires_grad(true);
  backward(reduce_sum(pool_global(x, PoolMode::Max, PoolAxes::Spatial)));
  std::span<const double> g = x.grad();
  REQUIRE(g[0] == 0.0);
  REQUIRE(g[1] == 1.0);
  REQUIRE(g[2] == 0.0);
  REQUIRE(g[3] == 0.0);
}

TEST_CASE("reduce_axes computes sum, mean and max over dropped axes") {
  Tensor<double> x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> s = reduce_axes(x, {1}, ReduceMode::Sum);
  REQUIRE(s.ndim() == 1);
  REQUIRE(s.at({0}) == 6.0);
  REQUIRE(s.at({1}) == 15.0);
  Tensor<double> m = reduce_axes(x, {0}, ReduceMode::Mean);
  REQUIRE(m.at({0}) == 2.5);
  REQUIRE(m.at({2}) == 4.5);
  Tensor<double> mx = reduce_axes(x, {0, 1}, ReduceMode::Max);
  REQUIRE(mx.numel() == 1);
  REQUIRE(mx.item() == 6.0);
  REQUIRE_THROWS_AS(reduce_axes(x, {0, 0}, ReduceMode::Sum), ShapeError);
  REQUIRE_THROWS_AS(reduce_axes(x, {2}, ReduceMode::Sum), ShapeError);
  REQUIRE(reduce_mean(x).item() == 3.5);
  REQUIRE(reduce_sum(x).item() == 21.0);
}

TEST_CASE("mul_vec and add_vec broadcast along the requested axis") {
  Tensor<double> x = Tensor<double>::from_data({2, 3}, {1, 1, 1, 2, 2, 2});
  Tensor<double> v0 = Tensor<double>::from_data({2}, {10, 100});
  Tensor<double> v1 = Tensor<double>::from_data({3}, {1, 2, 3});
  Tensor<double> m0 = mul_vec(x, v0, 0);
  REQUIRE(m0.at({0, 2}) == 10.0);
  REQUIRE(m0.at({1, 0}) == 200.0);
  Tensor<double> a1 = add_vec(x, v1, 1);
  REQUIRE(a1.at({0, 0}) == 2.0);
  REQUIRE(a1.at({1, 2}) == 5.0);
  REQUIRE_THROWS_AS(mul_vec(x, v1, 0), ShapeError);
  REQUIRE_THROWS_AS(add_vec(x, v0, 1), ShapeError);
}

TEST_CASE("reshape, transpose, concat, slice and gather_rows preserve layout") {
  Tensor<double> x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> r = reshape(x, {3, 2});
  REQUIRE(r.at({0, 1}) == 2.0);
  REQUIRE(r.at({2, 0}) == 5.0);
  REQUIRE_THROWS_AS(reshape(x, {4, 2}), ShapeError);

  Tensor<double> t = transpose2d(x);
  REQUIRE(t.extent(0) == 3);
  REQUIRE(t.at({0, 1}) == 4.0);
  REQUIRE(t.at({2, 0}) == 3.0);
  Tensor<double> tt = transpose2d(t);
  REQUIRE(testutil::all_close(tt.data(), x.data(), 0.0));

  Tensor<double> y = Tensor<double>::from_data({2, 2}, {7, 8, 9, 10});
  Tensor<double> c = concat<double>({x, y}, 1);
  REQUIRE(c.extent(1) == 5);
  REQUIRE(c.at({0, 0}) == 1.0);
  REQUIRE(c.at({0, 3}) == 7.0);
  REQUIRE(c.at({1, 4}) == 10.0);
  REQUIRE_THROWS_AS(concat<double>({x, y}, 0), ShapeError);

  Tensor<double> s = slice(c, 1, 3, 2);
  REQUIRE(testutil::all_close(s.data(), y.data(), 0.0));
  REQUIRE_THROWS_AS(slice(c, 1, 4, 2), ShapeError);

  Tensor<double> g = gather_rows(x, {1, 1, 0});
  REQUIRE(g.extent(0) == 3);
  REQUIRE(g.at({0, 0}) == 4.0);
  REQUIRE(g.at({2, 2}) == 3.0);
  REQUIRE_THROWS_AS(gather_rows(x, {2}), ShapeError);
}

TEST_CASE("slice and concat are mutually inverse and propagate gradients") {
  Tensor<double> x = Tensor<double>::from_data({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  x.set_requires_grad(true);
  Tensor<double> left = slice(x, 1, 0, 2);
  Tensor<double> right = slice(x, 1, 2, 2);
  Tensor<double> back = concat<double>({left, right}, 1);
  REQUIRE(testutil::all_close(back.data(), x.data(), 0.0));
  backward(reduce_sum(mul(back, back)));
  for (std::size_t i = 0; i < 8; ++i) REQUIRE(x.grad()[i] == 2.0 * x.data()[i]);
}

TEST_CASE("cross_entropy_rows matches hand values and skips weight-zero rows") {
  Tensor<double> logits = Tensor<double>::from_data({2, 2}, {0, 0, 100, 0});
  const double ln2 = std::log(2.0);
  Tensor<double> l1 = cross_entropy_rows(logits, {0, 0}, {1.0, 0.0});
  REQUIRE(l1.item() == Catch::Approx(ln2).margin(1e-9));
  Tensor<double> l2 = cross_entropy_rows(logits, {0, 0}, {1.0, 1.0});
  REQUIRE(l2.item() == Catch::Approx(ln2).margin(1e-6));  // second row is ~exact
  Tensor<double> l3 = cross_entropy_rows(logits, {0, 1}, {0.0, 1.0});
  REQUIRE(l3.item() == Catch::Approx(100.0).margin(1e-6));
  REQUIRE_THROWS_AS(cross_entropy_rows(logits, {0}, {1.0}), ShapeError);
  REQUIRE_THROWS_AS(cross_entropy_rows(logits, {0, 2}, {1.0, 1.0}), ShapeError);
}

TEST_CASE("bce_logits matches the closed form") {
  Tensor<double> x = Tensor<double>::from_data({3}, {0.0, 2.0, -1.5});
  const std::vector<double> targets{0.5, 1.0, 0.0};
  const std::vector<double> weights{1.0, 1.0, 2.0};
  double expect = 0;
  for (int i = 0; i < 3; ++i) {
    const double xi = x.at({i});
    const double s = 1.0 / (1.0 + std::exp(-xi));
    expect += weights[static_cast<std::size_t>(i)] *
              -(targets[static_cast<std::size_t>(i)] * std::log(s) +
                (1 - targets[static_cast<std::size_t>(i)]) * std::log(1 - s));
  }
  REQUIRE(bce_logits(x, targets, weights).item() == Catch::Approx(expect).margin(1e-9));
  // weight-zero entries contribute nothing even for extreme logits
  Tensor<double> wild = Tensor<double>::from_data({2}, {500.0, 0.0});
  REQUIRE(bce_logits(wild, {1.0, 0.5}, {0.0, 1.0}).item() == Catch::Approx(std::log(2.0)).margin(1e-9));
  REQUIRE_THROWS_AS(bce_logits(x, {1.0}, {1.0}), ShapeError);
}
