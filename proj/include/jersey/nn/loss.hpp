#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "jersey/datasets.hpp"
#include "jersey/nn/tensor.hpp"

namespace jersey::nn {

/// Row-wise softmax of [N, K] logits with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
  if (z.rank() != 2) throw Error(Errc::ShapeMismatch, "softmax expects [N, K]");
  Tensor<T> out(z.shape());
  const std::size_t n = z.dim(0), k = z.dim(1);
  for (std::size_t s = 0; s < n; ++s) {
    T m = z.at(s, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, z.at(s, j));
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += (out.at(s, j) = std::exp(z.at(s, j) - m));
    for (std::size_t j = 0; j < k; ++j) out.at(s, j) /= sum;
  }
  return out;
}

template <typename T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z) {
  Tensor<T> out(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = sigmoid(z[i]);
  return out;
}

template <typename T>
struct LossResult {
  T value = 0;
  Tensor<T> grad;  // d(value) / d(logits)
};

/// Mean over the batch of -log softmax(Z)[label].
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& z, std::span<const int> labels) {
  if (z.rank() != 2 || z.dim(0) != labels.size()) throw Error(Errc::ShapeMismatch, "cross entropy: batch mismatch");
  const std::size_t n = z.dim(0), k = z.dim(1);
  LossResult<T> r{T(0), softmax(z)};
  for (std::size_t s = 0; s < n; ++s) {
    const int label = labels[s];
    if (label < 0 || static_cast<std::size_t>(label) >= k) throw Error(Errc::OutOfRange, "label outside head");
    T m = z.at(s, 0);
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, z.at(s, j));
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z.at(s, j) - m);
    r.value += (std::log(sum) + m) - z.at(s, static_cast<std::size_t>(label));
    r.grad.at(s, static_cast<std::size_t>(label)) -= T(1);
  }
  const T inv = T(1) / static_cast<T>(n);
  r.value *= inv;
  for (auto& g : r.grad.values()) g *= inv;
  return r;
}

/// Binary cross-entropy on sigmoid(Z) against 0/1 targets of the same shape,
/// mean over all elements. Log arguments are clamped at 1e-7; the clamp
/// bounds the reported value only, the gradient is sigmoid(Z) - y throughout.
template <typename T>
LossResult<T> binary_cross_entropy(const Tensor<T>& z, const Tensor<T>& targets) {
  if (z.shape() != targets.shape() || z.size() == 0) throw Error(Errc::ShapeMismatch, "bce: logits/targets mismatch");
  constexpr T kEps = T(1e-7);
  LossResult<T> r{T(0), Tensor<T>(z.shape())};
  const T inv = T(1) / static_cast<T>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T p = sigmoid(z[i]);
    const T y = targets[i];
    r.value -= y * std::log(std::max(p, kEps)) + (T(1) - y) * std::log(std::max(T(1) - p, kEps));
    r.grad[i] = (p - y) * inv;
  }
  r.value *= inv;
  return r;
}

template <typename T>
Tensor<T> multilabel_targets(std::span<const MultiLabelVector> targets) {
  Tensor<T> t({targets.size(), static_cast<std::size_t>(kMultiLabelSize)});
  for (std::size_t s = 0; s < targets.size(); ++s) {
    for (int j = 0; j < kMultiLabelSize; ++j) t.at(s, static_cast<std::size_t>(j)) = targets[s].test(j) ? T(1) : T(0);
  }
  return t;
}

/// Multi-label objective: [N, 21] logits against encoded jersey numbers.
template <typename T>
LossResult<T> bce_loss(const Tensor<T>& z, std::span<const MultiLabelVector> targets) {
  if (z.rank() != 2 || z.dim(0) != targets.size() || z.dim(1) != static_cast<std::size_t>(kMultiLabelSize)) {
    throw Error(Errc::ShapeMismatch, "bce expects [N, 21] logits and N targets");
  }
  return binary_cross_entropy(z, multilabel_targets<T>(targets));
}

}  // namespace jersey::nn
