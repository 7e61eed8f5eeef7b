#pragma once

// Ordered registry of named trainable tensors. Insertion order is part of
// the contract: weight manifests and optimizer sweeps iterate it verbatim.

#include <string>
#include <utility>
#include <vector>

#include "clim/rng.hpp"
#include "clim/tensor.hpp"

namespace clim {

template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (find(name)) throw AutogradError("ParamStore: duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  std::vector<std::pair<std::string, Tensor<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void zero_grads() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

  // Copies values from another store; missing or shape-mismatched names throw.
  void load_values_from(const ParamStore& src) {
    for (auto& [name, t] : items_) {
      const Tensor<T>* s = src.find(name);
      if (!s) throw ShapeError("ParamStore: missing parameter '" + name + "'");
      if (s->shape() != t.shape())
        throw ShapeError("ParamStore: shape mismatch for '" + name + "': " + shape_str(t.shape()) + " vs " +
                         shape_str(s->shape()));
      std::copy_n(s->raw(), t.numel(), t.raw_mut());
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Fan-in scaled uniform init, U(-a, a) with a = sqrt(1 / fan_in). Biases use
// the fan-in of the layer they belong to.
template <typename T>
Tensor<T> init_uniform_fan_in(Rng& rng, Shape shape, std::size_t fan_in) {
  if (fan_in == 0) throw GeometryError("init_uniform_fan_in: zero fan-in");
  Tensor<T> t = Tensor<T>::zeros(std::move(shape));
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  rng.fill_uniform(t, -a, a);
  return t;
}

}  // namespace clim
