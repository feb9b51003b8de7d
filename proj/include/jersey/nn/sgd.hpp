#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "jersey/error.hpp"
#include "jersey/nn/model.hpp"

namespace jersey::nn {

/// SGD with momentum: v <- momentum * v + g, p <- p - lr * v.
template <typename T>
class Sgd {
 public:
  explicit Sgd(double momentum = 0.9) : momentum_(momentum) {}

  void step(ModelParams<T>& params, const ModelParams<T>& grads, double lr) {
    for (auto& [name, p] : params.tensors) {
      const auto it = grads.tensors.find(name);
      if (it == grads.tensors.end()) throw Error(Errc::ShapeMismatch, "no gradient for " + name);
      const Tensor<T>& g = it->second;
      require_shape(g, p.shape(), name.c_str());
      auto [vit, inserted] = velocity_.tensors.try_emplace(name, Tensor<T>(p.shape()));
      Tensor<T>& v = vit->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = static_cast<T>(momentum_) * v[i] + g[i];
        p[i] -= static_cast<T>(lr) * v[i];
      }
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i])) throw Error(Errc::NonFinite, "non-finite value in " + name + " after update");
      }
    }
  }

  const ModelParams<T>& velocity() const { return velocity_; }

 private:
  double momentum_;
  ModelParams<T> velocity_;
};

/// Cosine decay from `base` at step 0 to 0 at `total` steps.
inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0) return base;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

}  // namespace jersey::nn
