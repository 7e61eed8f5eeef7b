#pragma once

// Central-difference gradient verification, always in double. Each named
// check builds a small instance, runs one analytic backward pass, then
// perturbs sampled leaf coordinates by +-eps and compares. Primitive ops
// probe at eps=1e-3; composite blocks with ReLU kinks use 1e-4 (1e-5 for the
// deepest nets) so the probe cannot step across an activation boundary. Pass criterion:
// |analytic - numeric| <= tol * max(|analytic|, |numeric|) + abs_floor,
// reported as the single ratio max_rel <= tol.

#include <algorithm>
#include <functional>

#include "clim/climnet.hpp"
#include "clim/lct.hpp"
#include "clim/tracker.hpp"

namespace clim {

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-4;
  double abs_floor = 2e-6;
  int max_coords_per_leaf = 16;
};

struct GradCheckResult {
  std::string name;
  bool pass = false;
  double max_rel = 0;     // worst diff / (max(|a|,|n|) + abs_floor/tol)
  double tol = 0;
  int coords_checked = 0;
  std::string worst;      // "leaf k coord c: analytic=? numeric=?"
};

inline GradCheckResult check_gradients(const std::string& name, const std::vector<Tensor<double>>& leaves,
                                       const std::function<Tensor<double>()>& forward, std::uint32_t seed,
                                       GradCheckOptions opt = {}) {
  for (const Tensor<double>& l : leaves)
    if (!l.requires_grad()) throw AutogradError("gradcheck '" + name + "': leaf without requires_grad");
  std::vector<Tensor<double>> mutable_leaves = leaves;
  for (Tensor<double>& l : mutable_leaves) l.zero_grad();

  Tensor<double> loss = forward();
  if (loss.numel() != 1) throw ShapeError("gradcheck '" + name + "': loss must be scalar");
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(mutable_leaves.size());
  for (const Tensor<double>& l : mutable_leaves) {
    if (l.has_grad()) analytic.emplace_back(l.grad().begin(), l.grad().end());
    else analytic.emplace_back(l.numel(), 0.0);
  }

  GradCheckResult res;
  res.name = name;
  res.tol = opt.tol;
  res.pass = true;
  Rng coord_rng(seed ^ 0x5bd1e995u);
  const double denom_floor = opt.abs_floor / opt.tol;

  NoGradGuard ng;
  for (std::size_t li = 0; li < mutable_leaves.size(); ++li) {
    Tensor<double>& leaf = mutable_leaves[li];
    const std::size_t n = leaf.numel();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (opt.max_coords_per_leaf > 0 && n > static_cast<std::size_t>(opt.max_coords_per_leaf)) {
      for (std::size_t i = n - 1; i > 0; --i) std::swap(coords[i], coords[coord_rng.randint(0, static_cast<int>(i))]);
      coords.resize(static_cast<std::size_t>(opt.max_coords_per_leaf));
    }
    double* data = leaf.raw_mut();
    for (std::size_t c : coords) {
      const double saved = data[c];
      data[c] = saved + opt.eps;
      const double fp = forward().item();
      data[c] = saved - opt.eps;
      const double fm = forward().item();
      data[c] = saved;
      const double numeric = (fp - fm) / (2 * opt.eps);
      const double a = analytic[li][c];
      const double rel = std::abs(a - numeric) / (std::max(std::abs(a), std::abs(numeric)) + denom_floor);
      ++res.coords_checked;
      if (rel > res.max_rel) {
        res.max_rel = rel;
        char buf[160];
        std::snprintf(buf, sizeof buf, "leaf %zu coord %zu: analytic=%.9g numeric=%.9g", li, c, a, numeric);
        res.worst = buf;
      }
    }
  }
  res.pass = res.max_rel <= opt.tol;
  return res;
}

namespace gc {

inline Tensor<double> leaf(Rng& rng, const Shape& s, double lo, double hi) {
  std::vector<double> d(shape_numel(s));
  for (double& v : d) v = rng.uniform(lo, hi);
  Tensor<double> t = Tensor<double>::from_data(s, std::move(d));
  t.set_requires_grad(true);
  return t;
}

// sign * uniform(lo, hi): keeps data away from kinks at zero (abs, relu).
inline Tensor<double> leaf_signed(Rng& rng, const Shape& s, double lo, double hi) {
  std::vector<double> d(shape_numel(s));
  for (double& v : d) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  Tensor<double> t = Tensor<double>::from_data(s, std::move(d));
  t.set_requires_grad(true);
  return t;
}

// Shuffled arithmetic progression: pairwise gaps >= (hi-lo)/(n-1), so max
// reductions stay away from ties under +-eps probing.
inline Tensor<double> leaf_separated(Rng& rng, const Shape& s, double lo, double hi) {
  const std::size_t n = shape_numel(s);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(d[i], d[rng.randint(0, static_cast<int>(i))]);
  Tensor<double> t = Tensor<double>::from_data(s, std::move(d));
  t.set_requires_grad(true);
  return t;
}

inline Tensor<double> probe(Rng& rng, const Shape& s) {
  std::vector<double> d(shape_numel(s));
  for (double& v : d) v = rng.uniform(-1, 1);
  return Tensor<double>::from_data(s, std::move(d));
}

inline Tensor<double> dot(const Tensor<double>& y, const Tensor<double>& p) { return reduce_sum(mul(y, p)); }

inline std::vector<Tensor<double>> with_params(ParamStore<double>& ps, std::vector<Tensor<double>> extra) {
  for (auto& [name, t] : ps.items()) extra.push_back(t);
  return extra;
}

using CheckFn = std::function<GradCheckResult(std::uint32_t)>;

// Probe shape discovered from one throwaway forward, so cases never hardcode
// output extents.
template <typename Fwd>
GradCheckResult probed(const std::string& name, Rng& rng, std::vector<Tensor<double>> leaves, Fwd fwd,
                       std::uint32_t seed, GradCheckOptions opt = {}) {
  Shape out_shape;
  {
    NoGradGuard ng;
    out_shape = fwd().shape();
  }
  Tensor<double> p = probe(rng, out_shape);
  return check_gradients(
      name, std::move(leaves), [fwd, p]() { return dot(fwd(), p); }, seed, opt);
}

}  // namespace gc

namespace detail {

inline void register_elementwise_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  auto binary = [](const char* name, auto op, bool separated) {
    return std::pair<std::string, gc::CheckFn>(name, [name, op, separated](std::uint32_t seed) {
      Rng rng(seed);
      Tensor<double> a = gc::leaf(rng, {2, 3}, -1, 1);
      Tensor<double> b;
      if (separated) {
        // b offset from a by at least 0.1 so min/max never tie under probing
        std::vector<double> d(6);
        for (std::size_t i = 0; i < 6; ++i)
          d[i] = a.raw()[i] + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 0.6);
        b = Tensor<double>::from_data({2, 3}, std::move(d));
        b.set_requires_grad(true);
      } else {
        b = gc::leaf_signed(rng, {2, 3}, 0.4, 1.2);  // safe divisor
      }
      return gc::probed(name, rng, {a, b}, [op, a, b]() { return op(a, b); }, seed);
    });
  };
  reg.push_back(binary("add", [](auto a, auto b) { return add(a, b); }, false));
  reg.push_back(binary("sub", [](auto a, auto b) { return sub(a, b); }, false));
  reg.push_back(binary("mul", [](auto a, auto b) { return mul(a, b); }, false));
  reg.push_back(binary("div", [](auto a, auto b) { return div(a, b); }, false));
  reg.push_back(binary("minimum", [](auto a, auto b) { return minimum(a, b); }, true));
  reg.push_back(binary("maximum", [](auto a, auto b) { return maximum(a, b); }, true));

  auto unary = [](const char* name, auto op, double lo, double hi, bool sign) {
    return std::pair<std::string, gc::CheckFn>(name, [name, op, lo, hi, sign](std::uint32_t seed) {
      Rng rng(seed);
      Tensor<double> x = sign ? gc::leaf_signed(rng, {3, 4}, lo, hi) : gc::leaf(rng, {3, 4}, lo, hi);
      return gc::probed(name, rng, {x}, [op, x]() { return op(x); }, seed);
    });
  };
  reg.push_back(unary("neg", [](auto x) { return neg(x); }, -1, 1, false));
  reg.push_back(unary("abs", [](auto x) { return abs(x); }, 0.2, 1.0, true));
  reg.push_back(unary("exp", [](auto x) { return exp(x); }, -1, 1, false));
  reg.push_back(unary("log", [](auto x) { return log(x); }, 0.3, 2.0, false));
  reg.push_back(unary("sigmoid", [](auto x) { return sigmoid(x); }, -3, 3, false));
  reg.push_back(unary("relu", [](auto x) { return relu(x); }, 0.2, 1.0, true));
  reg.push_back(unary("scale", [](auto x) { return add_scalar(scale(x, 0.7), 0.3); }, -1, 1, false));

  reg.emplace_back("mul_vec", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 3, 2}, -1, 1);
    Tensor<double> v = gc::leaf(rng, {3}, -1, 1);
    return gc::probed("mul_vec", rng, {x, v}, [x, v]() { return mul_vec(x, v, 1); }, seed);
  });
  reg.emplace_back("add_vec", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 3, 2}, -1, 1);
    Tensor<double> v = gc::leaf(rng, {2}, -1, 1);
    return gc::probed("add_vec", rng, {x, v}, [x, v]() { return add_vec(x, v, 2); }, seed);
  });
}

inline void register_shape_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("reshape", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 6}, -1, 1);
    return gc::probed("reshape", rng, {x}, [x]() { return reshape(x, {3, 2, 2}); }, seed);
  });
  reg.emplace_back("transpose", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 5}, -1, 1);
    return gc::probed("transpose", rng, {x}, [x]() { return transpose2d(x); }, seed);
  });
  reg.emplace_back("concat", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> a = gc::leaf(rng, {2, 3}, -1, 1);
    Tensor<double> b = gc::leaf(rng, {1, 3}, -1, 1);
    Tensor<double> c = gc::leaf(rng, {2, 3}, -1, 1);
    return gc::probed("concat", rng, {a, b, c}, [a, b, c]() { return concat<double>({a, b, c}, 0); }, seed);
  });
  reg.emplace_back("slice", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {3, 5}, -1, 1);
    return gc::probed("slice", rng, {x}, [x]() { return slice(x, 1, 1, 3); }, seed);
  });
  reg.emplace_back("gather_rows", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {4, 3}, -1, 1);
    const std::vector<int> rows{2, 0, 2, 3};  // repeat checks accumulation
    return gc::probed("gather_rows", rng, {x}, [x, rows]() { return gather_rows(x, rows); }, seed);
  });
  reg.emplace_back("matmul", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> a = gc::leaf(rng, {3, 4}, -1, 1);
    Tensor<double> b = gc::leaf(rng, {4, 2}, -1, 1);
    return gc::probed("matmul", rng, {a, b}, [a, b]() { return matmul(a, b); }, seed);
  });
  reg.emplace_back("matmul_trans", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> a = gc::leaf(rng, {4, 3}, -1, 1);
    Tensor<double> b = gc::leaf(rng, {5, 4}, -1, 1);
    return gc::probed("matmul_trans", rng, {a, b}, [a, b]() { return matmul(a, b, true, true); }, seed);
  });
}

inline void register_reduce_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("reduce_sum", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 3, 2}, -1, 1);
    return gc::probed("reduce_sum", rng, {x}, [x]() { return reduce_axes(x, {0, 2}, ReduceMode::Sum); }, seed);
  });
  reg.emplace_back("reduce_mean", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 3, 2}, -1, 1);
    return gc::probed("reduce_mean", rng, {x}, [x]() { return reduce_axes(x, {1}, ReduceMode::Mean); }, seed);
  });
  reg.emplace_back("reduce_max", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf_separated(rng, {2, 3, 2}, -1, 1);
    return gc::probed("reduce_max", rng, {x}, [x]() { return reduce_axes(x, {0, 1}, ReduceMode::Max); }, seed);
  });
  reg.emplace_back("pool_avg", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 2, 3, 3}, -1, 1);
    return gc::probed("pool_avg", rng, {x}, [x]() { return pool_global(x, PoolMode::Avg, PoolAxes::Spatial); }, seed);
  });
  reg.emplace_back("pool_max", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf_separated(rng, {2, 2, 3, 3}, -1, 1);
    return gc::probed("pool_max", rng, {x}, [x]() { return pool_global(x, PoolMode::Max, PoolAxes::Spatial); }, seed);
  });
  reg.emplace_back("pool_avg_st", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 2, 3, 3}, -1, 1);
    return gc::probed("pool_avg_st", rng, {x},
                      [x]() { return pool_global(x, PoolMode::Avg, PoolAxes::Spatiotemporal); }, seed);
  });
  reg.emplace_back("softmax", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {3, 4}, -2, 2);
    return gc::probed("softmax", rng, {x}, [x]() { return softmax(x, 1); }, seed);
  });
  reg.emplace_back("layer_norm", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {3, 5}, -1, 1);
    Tensor<double> g = gc::leaf(rng, {5}, 0.5, 1.5);
    Tensor<double> b = gc::leaf(rng, {5}, -0.5, 0.5);
    return gc::probed("layer_norm", rng, {x, g, b}, [x, g, b]() { return layer_norm(x, g, b); }, seed);
  });
  reg.emplace_back("cross_entropy", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {4, 3}, -2, 2);
    const std::vector<int> targets{0, 2, 1, 2};
    const std::vector<double> weights{1.0, 0.5, 0.0, 2.0};
    return check_gradients(
        "cross_entropy", {x}, [x, targets, weights]() { return cross_entropy_rows(x, targets, weights); }, seed);
  });
  reg.emplace_back("bce", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {6}, -3, 3);
    const std::vector<double> targets{0.0, 1.0, 0.3, 0.8, 0.0, 1.0};
    const std::vector<double> weights{1.0, 0.25, 0.0, 1.5, 0.5, 1.0};
    return check_gradients("bce", {x}, [x, targets, weights]() { return bce_logits(x, targets, weights); }, seed);
  });
}

inline void register_conv_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("conv2d", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {3, 5, 5}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {4, 3, 3, 3}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {4}, -0.5, 0.5);
    return gc::probed("conv2d", rng, {x, w, b}, [x, w, b]() { return conv2d(x, w, b, {2, 2}, {1, 1}); }, seed);
  });
  reg.emplace_back("conv3d", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 2, 4, 4}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {3, 2, 2, 3, 3}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {3}, -0.5, 0.5);
    return gc::probed("conv3d", rng, {x, w, b}, [x, w, b]() { return conv3d(x, w, b, {1, 1, 2}, {0, 1, 1}); }, seed);
  });
  reg.emplace_back("conv3d_grouped", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {4, 1, 3, 3}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {4, 2, 1, 2, 2}, -0.5, 0.5);
    return gc::probed("conv3d_grouped", rng, {x, w},
                      [x, w]() { return conv3d(x, w, Tensor<double>(), {1, 1, 1}, {0, 0, 0}, 2); }, seed);
  });
  reg.emplace_back("conv_spatial", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 2, 4, 4}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {3, 2, 1, 3, 3}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {3}, -0.5, 0.5);
    return gc::probed("conv_spatial", rng, {x, w, b}, [x, w, b]() { return conv_spatial(x, w, b, {2, 2}, {1, 1}); },
                      seed);
  });
  reg.emplace_back("conv_temporal", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 3, 2, 2}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {3, 2, 3, 1, 1}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {3}, -0.5, 0.5);
    return gc::probed("conv_temporal", rng, {x, w, b}, [x, w, b]() { return conv_temporal(x, w, b, 1, 1); }, seed);
  });
  reg.emplace_back("conv_transpose3d", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 2, 2, 2}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {2, 3, 1, 2, 2}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {3}, -0.5, 0.5);
    return gc::probed("conv_transpose3d", rng, {x, w, b}, [x, w, b]() { return conv_transpose3d(x, w, b, {1, 2, 2}); },
                      seed);
  });
  reg.emplace_back("xcorr", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> x = gc::leaf(rng, {2, 4, 4}, -1, 1);
    Tensor<double> k = gc::leaf(rng, {2, 2, 2}, -1, 1);
    return gc::probed("xcorr", rng, {x, k}, [x, k]() { return xcorr_depthwise(x, k); }, seed);
  });
}

inline void register_climnet_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("ghost", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<GhostSpatialConv<double>>();
    mod->init(*ps, "g", rng, 3, 5, 2, true);  // odd width exercises the slice
    Tensor<double> x = gc::leaf(rng, {3, 2, 6, 6}, -1, 1);
    return gc::probed("ghost", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("ghost_even", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<GhostSpatialConv<double>>();
    mod->init(*ps, "g", rng, 2, 4, 1, true);
    Tensor<double> x = gc::leaf(rng, {2, 2, 4, 4}, -1, 1);
    return gc::probed("ghost_even", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("stconv", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<StConv<double>>();
    mod->init(*ps, "st", rng, 2, 3, 1, true);
    Tensor<double> x = gc::leaf(rng, {2, 2, 5, 5}, -1, 1);
    return gc::probed("stconv", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("gstc", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<GstcBlock<double>>();
    mod->init(*ps, "b", rng, 2, 3, 2, true);  // projected shortcut
    Tensor<double> x = gc::leaf(rng, {2, 2, 6, 6}, -1, 1);
    return gc::probed("gstc", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("gstc_identity", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<GstcBlock<double>>();
    mod->init(*ps, "b", rng, 3, 3, 1, true);  // identity shortcut
    Tensor<double> x = gc::leaf(rng, {3, 2, 4, 4}, -1, 1);
    // eps 1e-5: a pre-activation lands within ~1e-4 of a relu kink here, so a
    // wider central step straddles the kink and corrupts the difference quotient.
    return gc::probed("gstc_identity", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); },
                      seed, {.eps = 1e-5});
  });
  reg.emplace_back("gate", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<FeatureGate<double>>();
    mod->init(*ps, "gate", rng, 4);
    Tensor<double> x = gc::leaf(rng, {4, 2, 3, 3}, -1, 1);
    return gc::probed("gate", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("ms_fusion", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<MsFusionBlock<double>>();
    mod->init(*ps, "ms", rng, 3, 2, true);
    Tensor<double> x = gc::leaf(rng, {3, 2, 3, 3}, -1, 1);
    return gc::probed("ms_fusion", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("feature_transform", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<FeatureTransform<double>>();
    mod->init(*ps, "xf", rng, 6, 4);  // folded C*T = 3*2
    Tensor<double> x = gc::leaf(rng, {3, 2, 6, 6}, -1, 1);
    return gc::probed("feature_transform", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); },
                      seed, {.eps = 1e-4, .max_coords_per_leaf = 8});
  });
  reg.emplace_back("interp_loss", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> p1 = gc::leaf(rng, {3, 4, 4}, 0, 1);
    Tensor<double> p2 = gc::leaf(rng, {3, 4, 4}, 0, 1);
    Tensor<double> t1 = gc::probe(rng, {3, 4, 4});
    Tensor<double> t2 = gc::probe(rng, {3, 4, 4});
    return check_gradients(
        "interp_loss", {p1, p2}, [p1, p2, t1, t2]() { return interframe_loss<double>({p1, p2}, {t1, t2}); }, seed);
  });
  reg.emplace_back("climnet", [](std::uint32_t seed) {
    Rng rng(seed);
    ClimNetConfig cfg;
    cfg.widths = {4, 6, 8, 10};
    auto ps = std::make_shared<ParamStore<double>>();
    auto net = std::make_shared<ClimNet<double>>(cfg, *ps, "net", rng);
    Tensor<double> a = gc::leaf(rng, {3, 8, 8}, 0, 1);
    Tensor<double> b = gc::leaf(rng, {3, 8, 8}, 0, 1);
    return gc::probed("climnet", rng, gc::with_params(*ps, {a, b}), [ps, net, a, b]() { return net->forward(a, b); },
                      seed, {.eps = 1e-5, .max_coords_per_leaf = 3});
  });
}

inline void register_lct_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("token_map", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> r = gc::leaf(rng, {3, 2, 2}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {8, 3, 1, 1}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {8}, -0.5, 0.5);
    return gc::probed("token_map", rng, {r, w, b}, [r, w, b]() { return to_token_map(r, w, b); }, seed);
  });
  reg.emplace_back("coefficient", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> s = gc::leaf_separated(rng, {4, 8}, -1, 1);  // GMP inside
    Tensor<double> d = gc::leaf(rng, {4, 8}, -1, 1);
    Tensor<double> w = gc::leaf(rng, {8, 8}, -0.5, 0.5);
    Tensor<double> b = gc::leaf(rng, {8}, -0.5, 0.5);
    return gc::probed("coefficient", rng, {s, d, w, b}, [s, d, w, b]() { return encoder_coefficient(s, d, w, b); },
                      seed);
  });
  reg.emplace_back("fuse", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> d = gc::leaf(rng, {4, 8}, -1, 1);
    Tensor<double> m = gc::leaf(rng, {4, 8}, -1, 1);
    Tensor<double> c = gc::leaf(rng, {8}, 0, 1);
    return gc::probed("fuse", rng, {d, m, c}, [d, m, c]() { return encoder_fuse(d, c, m); }, seed);
  });
  reg.emplace_back("mha", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<MultiHeadAttention<double>>();
    mod->init(*ps, "att", rng, 8, 2);
    Tensor<double> q = gc::leaf(rng, {3, 8}, -1, 1);
    Tensor<double> kv = gc::leaf(rng, {2, 8}, -1, 1);  // k aliases v: grads accumulate
    return gc::probed("mha", rng, gc::with_params(*ps, {q, kv}), [ps, mod, q, kv]() { return mod->forward(q, kv, kv); },
                      seed, {.eps = 1e-4});
  });
  reg.emplace_back("ffn", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<FeedForward<double>>();
    mod->init(*ps, "ffn", rng, 8, 2);
    Tensor<double> x = gc::leaf(rng, {3, 8}, -1, 1);
    return gc::probed("ffn", rng, gc::with_params(*ps, {x}), [ps, mod, x]() { return mod->forward(x); }, seed,
                      {.eps = 1e-4});
  });
  reg.emplace_back("laeie", [](std::uint32_t seed) {
    Rng rng(seed);
    LctConfig cfg;
    cfg.token_c = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<LaeieStage<double>>();
    mod->init(*ps, "enc", rng, cfg);
    Tensor<double> s = gc::leaf_separated(rng, {4, 8}, -1, 1);
    Tensor<double> d = gc::leaf(rng, {4, 8}, -1, 1);
    return gc::probed("laeie", rng, gc::with_params(*ps, {s, d}), [ps, mod, s, d]() { return mod->forward(s, d); },
                      seed, {.eps = 1e-4, .max_coords_per_leaf = 8});
  });
  reg.emplace_back("calid", [](std::uint32_t seed) {
    Rng rng(seed);
    LctConfig cfg;
    cfg.token_c = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<CalidStage<double>>();
    mod->init(*ps, "dec", rng, cfg);
    Tensor<double> x = gc::leaf(rng, {4, 8}, -1, 1);
    Tensor<double> e = gc::leaf(rng, {4, 8}, -1, 1);
    return gc::probed("calid", rng, gc::with_params(*ps, {x, e}), [ps, mod, x, e]() { return mod->forward(x, e); },
                      seed, {.eps = 1e-4, .max_coords_per_leaf = 8});
  });
  reg.emplace_back("lct", [](std::uint32_t seed) {
    Rng rng(seed);
    LctConfig cfg;
    cfg.token_c = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<Lct<double>>(cfg, 3, *ps, "lct", rng);
    Tensor<double> r4 = gc::leaf(rng, {3, 2, 2}, -1, 1);
    Tensor<double> r5 = gc::leaf(rng, {3, 2, 2}, -1, 1);
    Tensor<double> rt = gc::leaf(rng, {3, 2, 2}, -1, 1);
    return gc::probed("lct", rng, gc::with_params(*ps, {r4, r5, rt}),
                      [ps, mod, r4, r5, rt]() { return mod->forward(r4, r5, rt); }, seed, {.eps = 1e-4, .max_coords_per_leaf = 6});
  });
}

inline TrackerConfig mini_tracker_config() {
  TrackerConfig cfg;
  cfg.widths = {2, 3, 4, 4, 4};
  cfg.template_size = 8;
  cfg.search_size = 16;
  cfg.lct.token_c = 8;
  cfg.lct.heads = 2;
  cfg.lct.ffn_mult = 2;
  cfg.climnet.widths = {2, 4, 4, 4};
  return cfg;
}

inline void register_tracker_checks(std::vector<std::pair<std::string, gc::CheckFn>>& reg) {
  reg.emplace_back("backbone", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<Backbone<double>>();
    mod->init(*ps, "bb", rng, mini_tracker_config());
    Tensor<double> x = gc::leaf(rng, {3, 8, 8}, 0, 1);
    Shape s4, s5;
    {
      NoGradGuard ng;
      auto [f4, f5] = mod->forward(x);
      s4 = f4.shape();
      s5 = f5.shape();
    }
    Tensor<double> p4 = gc::probe(rng, s4), p5 = gc::probe(rng, s5);
    auto fwd = [ps, mod, x, p4, p5]() {
      auto [f4, f5] = mod->forward(x);
      return add(gc::dot(f4, p4), gc::dot(f5, p5));
    };
    return check_gradients("backbone", gc::with_params(*ps, {x}), fwd, seed, {.eps = 1e-4, .max_coords_per_leaf = 8});
  });
  reg.emplace_back("heads", [](std::uint32_t seed) {
    Rng rng(seed);
    auto ps = std::make_shared<ParamStore<double>>();
    auto mod = std::make_shared<Heads<double>>();
    mod->init(*ps, "heads", rng, 8, 6);
    Tensor<double> x = gc::leaf(rng, {8, 2, 2}, -1, 1);
    Tensor<double> p1 = gc::probe(rng, {2, 2, 2}), p2 = gc::probe(rng, {1, 2, 2}), p3 = gc::probe(rng, {4, 2, 2});
    auto fwd = [ps, mod, x, p1, p2, p3]() {
      HeadOutputs<double> h = mod->forward(x);
      return add(gc::dot(h.cls1, p1), add(gc::dot(h.cls2, p2), gc::dot(h.reg, p3)));
    };
    return check_gradients("heads", gc::with_params(*ps, {x}), fwd, seed, {.eps = 1e-4, .max_coords_per_leaf = 8});
  });
  reg.emplace_back("tracking_loss", [](std::uint32_t seed) {
    Rng rng(seed);
    Tensor<double> cls1 = gc::leaf(rng, {2, 2, 2}, -1, 1);
    Tensor<double> cls2 = gc::leaf(rng, {1, 2, 2}, -1, 1);
    Tensor<double> reg_raw = gc::leaf(rng, {4, 2, 2}, -1, 1);
    const GridGeometry g{2, 8, 16};
    const LabelTargets<double> lt = assign_labels<double>({1, 1, 14, 14}, g);
    auto fwd = [cls1, cls2, reg_raw, lt]() {
      HeadOutputs<double> h{cls1, cls2, exp(reg_raw)};
      return tracking_loss(h, lt, 1.0, 1.0, 3.0).total;
    };
    return check_gradients("tracking_loss", {cls1, cls2, reg_raw}, fwd, seed, {.eps = 1e-4});
  });
  reg.emplace_back("joint", [](std::uint32_t seed) {
    Rng rng(seed);
    auto model = std::make_shared<TrackModel<double>>(mini_tracker_config(), seed + 1);
    Tensor<double> tmpl = gc::leaf(rng, {3, 8, 8}, 0, 1);
    Tensor<double> prev = gc::leaf(rng, {3, 16, 16}, 0, 1);
    Tensor<double> cur = gc::leaf(rng, {3, 16, 16}, 0, 1);
    const LabelTargets<double> lt = assign_labels<double>({1, 1, 14, 14}, model->grid());
    auto fwd = [model, tmpl, prev, cur, lt]() {
      TemplateFeatures<double> z = model->extract_template(tmpl);
      Tensor<double> latent = model->latent_frame(prev, cur);
      HeadOutputs<double> h = model->heads_forward(model->head_input(z, cur, latent));
      return tracking_loss(h, lt, 1.0, 1.0, 3.0).total;
    };
    return check_gradients("joint", gc::with_params(model->params(), {tmpl, prev, cur}), fwd, seed,
                           {.eps = 1e-5, .max_coords_per_leaf = 2});
  });
}

}  // namespace detail

inline const std::vector<std::pair<std::string, gc::CheckFn>>& gradcheck_registry() {
  static const std::vector<std::pair<std::string, gc::CheckFn>> reg = [] {
    std::vector<std::pair<std::string, gc::CheckFn>> r;
    detail::register_elementwise_checks(r);
    detail::register_shape_checks(r);
    detail::register_reduce_checks(r);
    detail::register_conv_checks(r);
    detail::register_climnet_checks(r);
    detail::register_lct_checks(r);
    detail::register_tracker_checks(r);
    return r;
  }();
  return reg;
}

inline std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : gradcheck_registry()) names.push_back(name);
  return names;
}

inline GradCheckResult run_gradcheck(const std::string& name, std::uint32_t seed) {
  for (const auto& [n, fn] : gradcheck_registry())
    if (n == name) return fn(seed);
  throw std::invalid_argument("gradcheck: unknown check '" + name + "'");
}

}  // namespace clim
