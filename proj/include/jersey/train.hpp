#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "jersey/augment.hpp"
#include "jersey/datasets.hpp"
#include "jersey/error.hpp"
#include "jersey/imaging.hpp"
#include "jersey/nn/loss.hpp"
#include "jersey/nn/model.hpp"
#include "jersey/nn/sgd.hpp"
#include "jersey/rng.hpp"

namespace jersey::train {

using nn::Objective;

struct StageConfig {
  std::string name = "stage";
  /// Either an in-memory manifest or a path to one.
  std::optional<Manifest> data;
  std::filesystem::path manifest;
  Objective objective = Objective::MultiClass;
  int epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  bool cosine = true;
  /// Fresh draw per record per epoch when set.
  std::optional<augment::Policy> augment;
  /// Stratified holdout used for best-epoch selection.
  double val_fraction = 0.1;
  /// Explicit validation set; overrides val_fraction.
  std::optional<Manifest> validation;
  /// Upsample training classes to this many rows.
  std::optional<std::size_t> balance_target;
  /// Stop after this many epochs without validation improvement (0 = off).
  int early_stop_patience = 0;

  void validate() const {
    if (epochs < 1) throw Error(Errc::ConfigError, "epochs must be >= 1");
    if (batch_size < 1) throw Error(Errc::ConfigError, "batch size must be >= 1");
    if (lr < 0.0) throw Error(Errc::ConfigError, "learning rate must be >= 0");
  }
};

struct TrainReport {
  std::string stage;
  std::size_t stage_index = 0;
  std::string objective;
  std::vector<double> train_loss;
  std::vector<double> train_accuracy;
  std::vector<double> val_accuracy;
  double initial_val_accuracy = 0.0;
  int selected_epoch = 0;  // 1-based
  double selected_val_accuracy = 0.0;
  std::size_t train_records = 0;
  std::size_t val_records = 0;
  std::uint64_t seed = 0;
  /// Excluded from to_json so serialized reports are reproducible.
  double wall_seconds = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["stage_index"] = stage_index;
    j["objective"] = objective;
    j["seed"] = seed;
    j["train_records"] = train_records;
    j["val_records"] = val_records;
    j["initial_val_accuracy"] = initial_val_accuracy;
    j["train_loss"] = train_loss;
    j["train_accuracy"] = train_accuracy;
    j["val_accuracy"] = val_accuracy;
    j["selected_epoch"] = selected_epoch;
    j["selected_val_accuracy"] = selected_val_accuracy;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Image cache and loader

/// Decoded images of a manifest keyed by relative path (duplicates share).
class ImageCache {
 public:
  const Image& get(const Manifest& m, const Record& r) {
    auto key = (m.root / r.path).string();
    auto it = images_.find(key);
    if (it != images_.end()) return it->second;
    try {
      return images_.emplace(std::move(key), load_png(m.resolve(r))).first->second;
    } catch (const Error& e) {
      throw Error(Errc::DataError, e.what());
    }
  }

 private:
  std::unordered_map<std::string, Image> images_;
};

struct Batch {
  nn::Tensor<float> images;
  std::vector<int> labels;
  std::vector<std::size_t> records;
};

namespace detail {
inline constexpr std::uint64_t kShuffleTag = 0x5F;
inline constexpr std::uint64_t kAugTag = 0xA6;
}  // namespace detail

/// Seed for one record's augmentation in one epoch.
inline AugSeed record_seed(AugSeed seed, int epoch, std::size_t record) {
  return seed.child({detail::kAugTag, static_cast<std::uint64_t>(epoch), record});
}

/// Per-epoch shuffled batches. With a policy each record is augmented from
/// record_seed(seed, epoch, index), so repeated records differ between
/// epochs but reproduce exactly for the same global seed.
class BatchLoader {
 public:
  BatchLoader(const Manifest& manifest, std::size_t batch_size, std::optional<augment::Policy> policy, int epoch,
              AugSeed seed, int input_size, ImageCache& cache, bool shuffle = true)
      : manifest_(manifest), batch_size_(batch_size), policy_(std::move(policy)), epoch_(epoch), seed_(seed),
        input_size_(input_size), cache_(cache) {
    if (manifest.records.empty()) throw Error(Errc::DataError, "cannot load batches from an empty manifest");
    order_.resize(manifest.records.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (shuffle) {
      Rng rng = seed.child({detail::kShuffleTag, static_cast<std::uint64_t>(epoch)}).rng();
      rng.shuffle(order_.begin(), order_.end());
    }
  }

  std::size_t batches() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  bool next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t n = std::min(batch_size_, order_.size() - pos_);
    const auto s = static_cast<std::size_t>(input_size_);
    out.images = nn::Tensor<float>({n, 3, s, s});
    out.labels.resize(n);
    out.records.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = order_[pos_ + i];
      out.records[i] = idx;
      out.labels[i] = manifest_.records[idx].cls;
      nn::write_image(out.images, i, image(idx));
    }
    pos_ += n;
    return true;
  }

  /// The pixels record `idx` contributes in this epoch.
  Image image(std::size_t idx) {
    const Image& raw = cache_.get(manifest_, manifest_.records[idx]);
    if (!policy_) return raw;
    return augment::apply_policy(raw, *policy_, record_seed(seed_, epoch_, idx));
  }

 private:
  const Manifest& manifest_;
  std::size_t batch_size_;
  std::optional<augment::Policy> policy_;
  int epoch_;
  AugSeed seed_;
  int input_size_;
  ImageCache& cache_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline BatchLoader dynamic_batch_loader(const Manifest& manifest, std::size_t batch_size,
                                        std::optional<augment::Policy> policy, int epoch, AugSeed seed,
                                        int input_size, ImageCache& cache) {
  return BatchLoader(manifest, batch_size, std::move(policy), epoch, seed, input_size, cache);
}

// ---------------------------------------------------------------------------
// Accuracy helpers

inline int predicted_class(const nn::Tensor<float>& logits, std::size_t row, Objective objective,
                           double threshold = 0.5) {
  const std::size_t k = logits.dim(1);
  if (objective == Objective::MultiClass) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits.at(row, j) > logits.at(row, best)) best = j;
    }
    return static_cast<int>(best);
  }
  std::array<float, kMultiLabelSize> scores{};
  for (std::size_t j = 0; j < k; ++j) scores[j] = nn::sigmoid(logits.at(row, j));
  return decode_multilabel(scores, threshold).cls;
}

inline double accuracy(const nn::Model<float>& model, const Manifest& m, Objective objective, ImageCache& cache,
                       std::size_t batch_size = 64) {
  if (m.records.empty()) return 0.0;
  BatchLoader loader(m, batch_size, std::nullopt, 0, AugSeed(0), model.config.input_size, cache, false);
  Batch b;
  std::size_t correct = 0;
  while (loader.next(b)) {
    const auto logits = nn::predict_logits(model, b.images);
    for (std::size_t i = 0; i < b.labels.size(); ++i) correct += predicted_class(logits, i, objective) == b.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(m.records.size());
}

// ---------------------------------------------------------------------------
// Training

inline void check_head(const nn::CnnConfig& config, Objective objective) {
  if (config.head != nn::head_size(objective)) {
    throw Error(Errc::HeadMismatch, "objective " + nn::objective_name(objective) + " needs head " +
                                        std::to_string(nn::head_size(objective)) + ", model has " +
                                        std::to_string(config.head));
  }
}

struct StageData {
  Manifest train;
  Manifest val;
};

/// The train/validation sets a stage uses under `seed`.
inline StageData stage_data(const StageConfig& stage, AugSeed seed) {
  Manifest all = stage.data ? *stage.data : read_manifest(stage.manifest);
  if (all.records.empty()) throw Error(Errc::DataError, "stage '" + stage.name + "' has an empty manifest");
  StageData d;
  if (stage.validation) {
    d.train = std::move(all);
    d.val = *stage.validation;
  } else {
    auto [train, val] = holdout(all, stage.val_fraction, seed.child(1));
    d.train = std::move(train);
    d.val = std::move(val);
  }
  // Tiny sets can leave the holdout empty; selection then falls back to
  // training-set accuracy.
  if (d.val.records.empty()) d.val = d.train;
  if (stage.balance_target) d.train = balance_upsample(d.train, *stage.balance_target, seed.child(2));
  return d;
}

inline std::pair<nn::Model<float>, TrainReport> train_stage(nn::Model<float> model, const StageConfig& stage,
                                                             AugSeed seed, std::size_t stage_index = 0) {
  stage.validate();
  check_head(model.config, stage.objective);
  const auto started = std::chrono::steady_clock::now();
  const StageData data = stage_data(stage, seed);
  ImageCache cache;

  TrainReport report;
  report.stage = stage.name;
  report.stage_index = stage_index;
  report.objective = nn::objective_name(stage.objective);
  report.seed = seed.value();
  report.train_records = data.train.records.size();
  report.val_records = data.val.records.size();
  report.initial_val_accuracy = accuracy(model, data.val, stage.objective, cache);

  nn::Sgd<float> optimizer(stage.momentum);
  const std::size_t steps_per_epoch = (data.train.records.size() + stage.batch_size - 1) / stage.batch_size;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(stage.epochs);
  std::size_t step = 0;
  nn::ModelParams<float> best = model.params;
  double best_acc = -1.0;
  int since_best = 0;

  std::vector<MultiLabelVector> targets;
  for (int epoch = 1; epoch <= stage.epochs; ++epoch) {
    BatchLoader loader(data.train, stage.batch_size, stage.augment, epoch, seed, model.config.input_size, cache);
    Batch b;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    while (loader.next(b)) {
      auto graph = nn::forward(model, b.images);
      nn::LossResult<float> loss;
      if (stage.objective == Objective::MultiClass) {
        loss = nn::cross_entropy_loss<float>(graph.logits(), b.labels);
      } else {
        targets.clear();
        for (int label : b.labels) targets.push_back(encode_multilabel(label));
        loss = nn::bce_loss<float>(graph.logits(), targets);
      }
      if (!std::isfinite(loss.value)) {
        throw Error(Errc::DivergedError, "loss became non-finite in stage '" + stage.name + "' epoch " +
                                             std::to_string(epoch));
      }
      for (std::size_t i = 0; i < b.labels.size(); ++i) {
        correct += predicted_class(graph.logits(), i, stage.objective) == b.labels[i];
      }
      loss_sum += static_cast<double>(loss.value) * static_cast<double>(b.labels.size());
      const auto grads = graph.backward(loss.grad);
      const double lr = stage.cosine ? nn::cosine_lr(stage.lr, step, total_steps) : stage.lr;
      optimizer.step(model.params, grads, lr);
      ++step;
    }
    const double n = static_cast<double>(data.train.records.size());
    report.train_loss.push_back(loss_sum / n);
    report.train_accuracy.push_back(static_cast<double>(correct) / n);
    const double val = accuracy(model, data.val, stage.objective, cache);
    report.val_accuracy.push_back(val);
    if (val > best_acc) {
      best_acc = val;
      best = model.params;
      report.selected_epoch = epoch;
      since_best = 0;
    } else if (stage.early_stop_patience > 0 && ++since_best >= stage.early_stop_patience) {
      break;
    }
  }
  report.selected_val_accuracy = best_acc;
  model.params = std::move(best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

struct CurriculumResult {
  nn::Model<float> model;
  std::vector<TrainReport> reports;
};

/// Called after each finished stage with (stage index, model, report).
using StageCallback = std::function<void(std::size_t, const nn::Model<float>&, const TrainReport&)>;

/// Trains the stages in order, each starting from the previous stage's
/// selected parameters. Stage k draws from seed.child(k), so resuming after
/// stage k reproduces the uninterrupted run.
inline CurriculumResult run_curriculum(const nn::CnnConfig& config, const std::vector<StageConfig>& stages,
                                       AugSeed seed, const StageCallback& on_stage = {},
                                       std::optional<std::pair<std::size_t, nn::Model<float>>> resume = std::nullopt) {
  if (stages.empty()) throw Error(Errc::ConfigError, "curriculum needs at least one stage");
  config.validate();
  for (const auto& s : stages) check_head(config, s.objective);
  CurriculumResult result{nn::Model<float>::create(config), {}};
  std::size_t first = 0;
  if (resume) {
    if (!(resume->second.config == config)) throw Error(Errc::HeadMismatch, "resume checkpoint config differs");
    first = resume->first;
    result.model = std::move(resume->second);
  }
  for (std::size_t k = first; k < stages.size(); ++k) {
    auto [model, report] = train_stage(std::move(result.model), stages[k], seed.child(k), k);
    result.model = std::move(model);
    if (on_stage) on_stage(k, result.model, report);
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace jersey::train
