#pragma once

// SGD with classical momentum and decoupled-free (L2-into-gradient) weight
// decay:
//   g = grad + weight_decay * p
//   v = momentum * v + g
//   p = p - lr * v
// Velocities are keyed by parameter name so they survive save/load cycles of
// the parameter values themselves.

#include <cmath>
#include <map>
#include <string>

#include "clim/params.hpp"

namespace clim {

template <typename T>
void sgd_step(const std::string& name, Tensor<T>& param, T lr, T momentum, T weight_decay,
              std::map<std::string, std::vector<T>>& velocity) {
  if (!param.has_grad()) throw AutogradError("sgd_step: parameter '" + name + "' has no gradient");
  auto [it, inserted] = velocity.try_emplace(name, param.numel(), T(0));
  std::vector<T>& v = it->second;
  if (v.size() != param.numel()) throw ShapeError("sgd_step: velocity size drifted for '" + name + "'");
  T* p = param.raw_mut();
  const std::span<const T> g = param.grad();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
    p[i] -= lr * v[i];
  }
}

template <typename T>
class Sgd {
 public:
  Sgd(T lr, T momentum = T(0.9), T weight_decay = T(1e-4)) : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

  void step(ParamStore<T>& params) {
    for (auto& [name, t] : params.items()) sgd_step(name, t, lr_, momentum_, weight_decay_, velocity_);
    params.zero_grads();
  }

  // Steps only parameters selected by pred(name); every other gradient is
  // still cleared, so frozen parameters never accumulate across steps.
  template <typename Pred>
  void step_matching(ParamStore<T>& params, Pred pred) {
    for (auto& [name, t] : params.items())
      if (pred(name)) sgd_step(name, t, lr_, momentum_, weight_decay_, velocity_);
    params.zero_grads();
  }

 private:
  T lr_, momentum_, weight_decay_;
  std::map<std::string, std::vector<T>> velocity_;
};

// Log-space interpolation from lr_start at step 0 to lr_end at step total-1.
inline double log_decay_lr(double lr_start, double lr_end, int step, int total) {
  if (total <= 1 || lr_start == lr_end) return lr_start;  // constant schedule; keeps lr 0 exact
  if (lr_start <= 0 || lr_end <= 0)
    throw ConfigError("log_decay_lr: geometric decay between distinct rates needs positive endpoints");
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  return lr_start * std::pow(lr_end / lr_start, t);
}

}  // namespace clim
