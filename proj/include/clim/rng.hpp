#pragma once

// Deterministic randomness. std::mt19937 has a standard-mandated sequence,
// but the std distributions do not, so the distributions are hand-rolled
// here. All sampling happens in double and is cast at the edge; a given seed
// therefore produces the same stream regardless of the tensor scalar type.

#include <cmath>
#include <cstdint>
#include <random>

#include "clim/tensor.hpp"

namespace clim {

class Rng {
 public:
  explicit Rng(std::uint32_t seed) : gen_(seed) {}

  std::uint32_t next_u32() { return gen_(); }

  // [0, 1), 32 bits of precision.
  double uniform() { return static_cast<double>(gen_()) * 0x1p-32; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range.
  int randint(int lo, int hi) {
    if (hi < lo) throw GeometryError("Rng::randint: empty range");
    const std::uint32_t span = static_cast<std::uint32_t>(hi - lo) + 1u;
    return lo + static_cast<int>(gen_() % span);
  }

  // Box-Muller, one draw per call (the sine half is discarded to keep the
  // stream position independent of call parity).
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = (static_cast<double>(gen_()) + 0.5) * 0x1p-32;
    const double u2 = static_cast<double>(gen_()) * 0x1p-32;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    return mean + stddev * z;
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    T* p = t.raw_mut();
    for (std::size_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(uniform(lo, hi));
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    T* p = t.raw_mut();
    for (std::size_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(normal(mean, stddev));
  }

 private:
  std::mt19937 gen_;
};

}  // namespace clim
