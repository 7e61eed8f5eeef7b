#include <catch2/catch_amalgamated.hpp>

#include "clim/ops.hpp"
#include "clim/rng.hpp"
#include "clim/tensor.hpp"

using namespace clim;

TEST_CASE("construction validates shape against payload") {
  REQUIRE_THROWS_AS(Tensor<double>::from_data({2, 3}, {1.0, 2.0}), ShapeError);
  REQUIRE_THROWS_AS(Tensor<double>::from_data({0, 3}, {}), ShapeError);
  REQUIRE_THROWS_AS(Tensor<double>::from_data({2, -1}, {1.0, 2.0}), ShapeError);
  REQUIRE_THROWS_AS(Tensor<double>::zeros({}), ShapeError);

  Tensor<double> t = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  REQUIRE(t.ndim() == 2);
  REQUIRE(t.extent(0) == 2);
  REQUIRE(t.extent(1) == 3);
  REQUIRE(t.numel() == 6);
  REQUIRE(t.at({1, 2}) == 6.0);
  REQUIRE_THROWS_AS(t.at({2, 0}), ShapeError);
  REQUIRE_THROWS_AS(t.at({0}), ShapeError);
  REQUIRE_THROWS_AS(t.extent(2), ShapeError);
}

TEST_CASE("factory helpers fill as documented") {
  Tensor<double> z = Tensor<double>::zeros({2, 2});
  Tensor<double> o = Tensor<double>::ones({3});
  Tensor<double> f = Tensor<double>::full({2}, 7.5);
  Tensor<double> s = Tensor<double>::scalar(3.25);
  for (double v : z.data()) REQUIRE(v == 0.0);
  for (double v : o.data()) REQUIRE(v == 1.0);
  for (double v : f.data()) REQUIRE(v == 7.5);
  REQUIRE(s.numel() == 1);
  REQUIRE(s.item() == 3.25);
  Tensor<double> two = Tensor<double>::ones({2});
  REQUIRE_THROWS_AS(two.item(), ShapeError);
}

TEST_CASE("default-constructed tensor is undefined") {
  Tensor<double> t;
  REQUIRE_FALSE(t.defined());
}

TEST_CASE("backward of a plain sum fills the leaf gradient with ones") {
  Tensor<double> x = Tensor<double>::from_data({5}, {1, -2, 3, 0.5, -0.25});
  x.set_requires_grad(true);
  Tensor<double> loss = reduce_sum(x);
  backward(loss);
  REQUIRE(x.has_grad());
  for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward of sum(sigmoid(x)) at x = 0 yields 0.25 per element") {
  Tensor<double> x = Tensor<double>::zeros({4});
  x.set_requires_grad(true);
  backward(reduce_sum(sigmoid(x)));
  REQUIRE(x.grad().size() == 4);
  for (double g : x.grad()) REQUIRE(g == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("gradient accumulates across repeated uses of a leaf") {
  Tensor<double> x = Tensor<double>::ones({3});
  x.set_requires_grad(true);
  backward(reduce_sum(add(x, x)));
  for (double g : x.grad()) REQUIRE(g == 2.0);
  x.zero_grad();
  REQUIRE_FALSE(x.has_grad());
}

TEST_CASE("backward requires a scalar root") {
  Tensor<double> x = Tensor<double>::ones({2});
  x.set_requires_grad(true);
  Tensor<double> y = add(x, x);
  REQUIRE_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("backward frees the graph; second call reports a detached graph") {
  Tensor<double> x = Tensor<double>::ones({2});
  x.set_requires_grad(true);
  Tensor<double> loss = reduce_sum(mul(x, x));
  backward(loss);
  REQUIRE_THROWS_AS(backward(loss), AutogradError);
}

TEST_CASE("gradients only flow into leaves that request them") {
  Tensor<double> a = Tensor<double>::ones({3});
  Tensor<double> b = Tensor<double>::full({3}, 2.0);
  a.set_requires_grad(true);
  backward(reduce_sum(mul(a, b)));
  REQUIRE(a.has_grad());
  REQUIRE_FALSE(b.has_grad());
  for (double g : a.grad()) REQUIRE(g == 2.0);
}

TEST_CASE("requires_grad cannot be toggled on a non-leaf") {
  Tensor<double> x = Tensor<double>::ones({2});
  x.set_requires_grad(true);
  Tensor<double> y = add(x, x);
  REQUIRE_FALSE(y.is_leaf());
  REQUIRE_THROWS_AS(y.set_requires_grad(true), AutogradError);
}

TEST_CASE("grad access on a leaf without a gradient throws") {
  Tensor<double> x = Tensor<double>::ones({2});
  x.set_requires_grad(true);
  REQUIRE_THROWS_AS(x.grad(), AutogradError);
}

TEST_CASE("NoGradGuard detaches results from the tape") {
  Tensor<double> x = Tensor<double>::ones({2});
  x.set_requires_grad(true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = reduce_sum(sigmoid(x));
  }
  REQUIRE(y.is_leaf());
  REQUIRE_THROWS_AS(backward(y), AutogradError);
  REQUIRE_FALSE(x.has_grad());
}

TEST_CASE("forward values are checked for finiteness") {
  Tensor<double> big = Tensor<double>::full({2}, 1e308);
  REQUIRE_THROWS_AS(exp(big), NumericError);
  {
    NoGradGuard guard;  // finite checks are orthogonal to grad mode
    REQUIRE_THROWS_AS(add(big, big), NumericError);
  }
}

TEST_CASE("max reduction ties break to the first index in row-major order") {
  Tensor<double> x = Tensor<double>::from_data({4}, {5, 5, 5, 5});
  x.set_requires_grad(true);
  backward(reduce_axes(x, {0}, ReduceMode::Max));
  std::span<const double> g = x.grad();
  REQUIRE(g[0] == 1.0);
  REQUIRE(g[1] == 0.0);
  REQUIRE(g[2] == 0.0);
  REQUIRE(g[3] == 0.0);
}

TEST_CASE("forward evaluation is bit-identical across repeated runs") {
  Rng rng(99);
  std::vector<double> vals(24);
  for (double& v : vals) v = rng.uniform(-2.0, 2.0);
  Tensor<double> x = Tensor<double>::from_data({4, 6}, std::vector<double>(vals));
  Tensor<double> y1 = softmax(sigmoid(x), 1);
  Tensor<double> y2 = softmax(sigmoid(x), 1);
  std::span<const double> a = y1.data();
  std::span<const double> b = y2.data();
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("same_storage distinguishes views of the same buffer") {
  Tensor<double> x = Tensor<double>::ones({4});
  Tensor<double> alias = x;
  Tensor<double> copy = Tensor<double>::ones({4});
  REQUIRE(x.same_storage(alias));
  REQUIRE_FALSE(x.same_storage(copy));
}

TEST_CASE("rng is deterministic per seed and distinct across seeds") {
  Rng a(7), b(7), c(8);
  for (int i = 0; i < 16; ++i) REQUIRE(a.next_u32() == b.next_u32());
  bool differs = false;
  Rng a2(7);
  for (int i = 0; i < 16; ++i) differs |= (a2.next_u32() != c.next_u32());
  REQUIRE(differs);
  Rng d(3);
  for (int i = 0; i < 100; ++i) {
    const double u = d.uniform(2.0, 5.0);
    REQUIRE(u >= 2.0);
    REQUIRE(u < 5.0);
    const int k = d.randint(-2, 2);
    REQUIRE(k >= -2);
    REQUIRE(k <= 2);
  }
}
