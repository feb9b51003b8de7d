#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "jersey/error.hpp"
#include "jersey/imaging.hpp"
#include "jersey/nn/layers.hpp"
#include "jersey/nn/tensor.hpp"
#include "jersey/rng.hpp"

namespace jersey::nn {

enum class Objective { MultiClass, MultiLabel };

inline int head_size(Objective o) { return o == Objective::MultiClass ? 101 : 21; }

inline std::string objective_name(Objective o) { return o == Objective::MultiClass ? "multi-class" : "multi-label"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "multi-class") return Objective::MultiClass;
  if (s == "multi-label") return Objective::MultiLabel;
  throw Error(Errc::ConfigError, "unknown objective '" + s + "'");
}

/// Desk-scale CNN: per block conv3x3 -> ReLU -> 2x2 max pool, then an
/// adaptive average pool to `pool_grid` x `pool_grid` and a linear head.
struct CnnConfig {
  int input_size = 64;
  std::vector<int> channels = {16, 32, 64};
  int head = 101;
  int pool_grid = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (head != 101 && head != 21) throw Error(Errc::ConfigError, "head must be 101 or 21");
    if (channels.empty()) throw Error(Errc::ConfigError, "at least one conv block is required");
    for (int c : channels) {
      if (c < 1) throw Error(Errc::ConfigError, "conv channels must be positive");
    }
    int size = input_size;
    for (std::size_t i = 0; i < channels.size(); ++i) size /= 2;
    if (input_size < 2 || size < pool_grid || pool_grid < 1) {
      throw Error(Errc::ConfigError, "input size too small for the conv stack and pool grid");
    }
  }

  int final_map_size() const {
    int size = input_size;
    for (std::size_t i = 0; i < channels.size(); ++i) size /= 2;
    return size;
  }

  int head_inputs() const { return channels.back() * pool_grid * pool_grid; }

  nlohmann::json to_json() const {
    return {{"input_size", input_size}, {"channels", channels}, {"head", head}, {"pool_grid", pool_grid},
            {"seed", seed}};
  }

  static CnnConfig from_json(const nlohmann::json& j) {
    CnnConfig c;
    c.input_size = j.value("input_size", c.input_size);
    c.channels = j.value("channels", c.channels);
    c.head = j.value("head", c.head);
    c.pool_grid = j.value("pool_grid", c.pool_grid);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  }

  friend bool operator==(const CnnConfig&, const CnnConfig&) = default;
};

/// Named parameter tensors ("conv1.weight", ..., "head.bias"). Also used
/// for gradients and optimizer state, which share the layout.
template <typename T>
struct ModelParams {
  std::map<std::string, Tensor<T>> tensors;

  Tensor<T>& operator[](const std::string& name) { return tensors.at(name); }
  const Tensor<T>& operator[](const std::string& name) const { return tensors.at(name); }

  ModelParams zeros_like() const {
    ModelParams z;
    for (const auto& [name, t] : tensors) z.tensors.emplace(name, Tensor<T>(t.shape()));
    return z;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline std::string conv_name(std::size_t block) { return "conv" + std::to_string(block + 1); }

/// He-normal conv weights, 1/sqrt(fan_in) normal head weights, zero biases.
/// A 21-way head starts its biases at the log-odds of two positive labels
/// out of 21; from zero, the first updates drive every sigmoid down together
/// and can leave the network stuck predicting the prior.
template <typename T>
ModelParams<T> init_params(const CnnConfig& config) {
  config.validate();
  Rng rng = AugSeed(config.seed).child(0x1417).rng();
  ModelParams<T> p;
  std::size_t in_channels = 3;
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    const auto out_channels = static_cast<std::size_t>(config.channels[b]);
    Tensor<T> w({out_channels, in_channels, 3, 3});
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_channels * 9));
    for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, stddev));
    p.tensors.emplace(conv_name(b) + ".weight", std::move(w));
    p.tensors.emplace(conv_name(b) + ".bias", Tensor<T>({out_channels}));
    in_channels = out_channels;
  }
  const auto features = static_cast<std::size_t>(config.head_inputs());
  const auto head = static_cast<std::size_t>(config.head);
  Tensor<T> w({head, features});
  const double stddev = std::sqrt(1.0 / static_cast<double>(features));
  for (auto& v : w.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  p.tensors.emplace("head.weight", std::move(w));
  Tensor<T> b({head});
  if (config.head == head_size(Objective::MultiLabel)) b.fill(static_cast<T>(std::log(2.0 / 19.0)));
  p.tensors.emplace("head.bias", std::move(b));
  return p;
}

template <typename T>
struct Model {
  CnnConfig config;
  ModelParams<T> params;

  static Model create(const CnnConfig& config) { return {config, init_params<T>(config)}; }
};

/// One forward pass with everything backward needs. Backward may run once.
template <typename T>
class ForwardGraph {
 public:
  const Tensor<T>& logits() const { return logits_; }

  ModelParams<T> backward(const Tensor<T>& dlogits) {
    if (consumed_) throw Error(Errc::GraphReuse, "backward already ran on this graph; run forward again");
    require_shape(dlogits, logits_.shape(), "logit gradient");
    consumed_ = true;
    ModelParams<T> grads = params_->zeros_like();
    Tensor<T> d = layers::linear_backward(dlogits, pooled_, (*params_)["head.weight"], grads["head.weight"],
                                          grads["head.bias"]);
    d = layers::adaptive_avgpool_backward(d.reshaped(grid_shape_), blocks_.back().pooled.shape());
    for (std::size_t b = blocks_.size(); b-- > 0;) {
      Block& blk = blocks_[b];
      d = layers::maxpool2_backward(d, blk.pool);
      d = layers::relu_backward(std::move(d), blk.activated);
      const std::string name = conv_name(b);
      d = layers::conv3x3_backward(d, (*params_)[name + ".weight"], blk.conv, grads[name + ".weight"],
                                   grads[name + ".bias"], b > 0);
    }
    blocks_.clear();
    return grads;
  }

 private:
  template <typename U>
  friend ForwardGraph<U> forward(const Model<U>& model, const Tensor<U>& batch);

  struct Block {
    layers::ConvCache<T> conv;
    Tensor<T> activated;
    layers::PoolCache pool;
    Tensor<T> pooled;
  };

  const ModelParams<T>* params_ = nullptr;
  std::vector<Block> blocks_;
  Shape grid_shape_;
  Tensor<T> pooled_;
  Tensor<T> logits_;
  bool consumed_ = false;
};

/// batch is [N, 3, H, W] with values in [0, 1]; returns a graph holding the
/// [N, head] logits.
template <typename T>
ForwardGraph<T> forward(const Model<T>& model, const Tensor<T>& batch) {
  const auto size = static_cast<std::size_t>(model.config.input_size);
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != size || batch.dim(3) != size) {
    throw Error(Errc::ShapeMismatch, "input batch " + shape_string(batch.shape()) + " does not match [N,3," +
                                         std::to_string(size) + "," + std::to_string(size) + "]");
  }
  ForwardGraph<T> g;
  g.params_ = &model.params;
  const Tensor<T>* x = &batch;
  g.blocks_.resize(model.config.channels.size());
  for (std::size_t b = 0; b < g.blocks_.size(); ++b) {
    auto& blk = g.blocks_[b];
    const std::string name = conv_name(b);
    blk.activated = layers::relu_forward(
        layers::conv3x3_forward(*x, model.params[name + ".weight"], model.params[name + ".bias"], &blk.conv));
    blk.pooled = layers::maxpool2_forward(blk.activated, &blk.pool);
    x = &blk.pooled;
  }
  const Tensor<T> grid = layers::adaptive_avgpool_forward(*x, static_cast<std::size_t>(model.config.pool_grid));
  g.grid_shape_ = grid.shape();
  g.pooled_ = grid.reshaped({grid.dim(0), grid.size() / grid.dim(0)});
  g.logits_ = layers::linear_forward(g.pooled_, model.params["head.weight"], model.params["head.bias"]);
  return g;
}

/// Logits without keeping the backward caches.
template <typename T>
Tensor<T> predict_logits(const Model<T>& model, const Tensor<T>& batch) {
  Tensor<T> x = batch;
  for (std::size_t b = 0; b < model.config.channels.size(); ++b) {
    const std::string name = conv_name(b);
    x = layers::maxpool2_forward(
        layers::relu_forward(layers::conv3x3_forward<T>(x, model.params[name + ".weight"],
                                                        model.params[name + ".bias"], nullptr)),
        nullptr);
  }
  const Tensor<T> grid = layers::adaptive_avgpool_forward(x, static_cast<std::size_t>(model.config.pool_grid));
  return layers::linear_forward(grid.reshaped({grid.dim(0), grid.size() / grid.dim(0)}), model.params["head.weight"],
                                model.params["head.bias"]);
}

/// Writes one image into slot `index` of a [N, 3, S, S] batch, resizing to S
/// when needed and scaling to [0, 1].
template <typename T>
void write_image(Tensor<T>& batch, std::size_t index, const Image& img) {
  const int size = static_cast<int>(batch.dim(2));
  if (img.width() != size || img.height() != size) {
    write_image(batch, index, resize_bilinear(img, size, size));
    return;
  }
  const auto s = static_cast<std::size_t>(size);
  auto px = img.pixels();
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      for (std::size_t c = 0; c < 3; ++c) batch.at(index, c, y, x) = static_cast<T>(px[(y * s + x) * 3 + c]) / T(255);
    }
  }
}

template <typename T>
Tensor<T> images_to_batch(std::span<const Image> images, int input_size) {
  const auto s = static_cast<std::size_t>(input_size);
  Tensor<T> batch({images.size(), 3, s, s});
  for (std::size_t i = 0; i < images.size(); ++i) write_image(batch, i, images[i]);
  return batch;
}

}  // namespace jersey::nn
