#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "jersey/datasets.hpp"
#include "jersey/error.hpp"
#include "jersey/imaging.hpp"
#include "jersey/nn/loss.hpp"
#include "jersey/nn/model.hpp"
#include "jersey/train.hpp"

namespace jersey::infer {

enum class Source { MultiClass, MultiLabel, Ensemble };

inline std::string source_name(Source s) {
  switch (s) {
    case Source::MultiClass: return "multi-class";
    case Source::MultiLabel: return "multi-label";
    case Source::Ensemble: return "ensemble";
  }
  return "?";
}

struct Prediction {
  int cls = kUnrecognizable;
  double confidence = 0.0;
  Source source = Source::MultiClass;
};

inline void require_head(const nn::Model<float>& model, int head) {
  if (model.config.head != head) {
    throw Error(Errc::ShapeMismatch,
                "model head " + std::to_string(model.config.head) + " where " + std::to_string(head) + " is needed");
  }
}

/// Argmax of softmax per row; ties resolve to the lowest index.
inline std::vector<Prediction> multiclass_from_logits(const nn::Tensor<float>& logits) {
  if (logits.rank() != 2 || logits.dim(1) != static_cast<std::size_t>(kNumClasses)) {
    throw Error(Errc::ShapeMismatch, "multi-class logits must be [N, 101]");
  }
  const auto probs = nn::softmax(logits);
  std::vector<Prediction> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.dim(1); ++j) {
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    }
    out[i] = {static_cast<int>(best), static_cast<double>(probs.at(i, best)), Source::MultiClass};
  }
  return out;
}

inline std::vector<Prediction> multilabel_from_logits(const nn::Tensor<float>& logits, double threshold) {
  if (logits.rank() != 2 || logits.dim(1) != static_cast<std::size_t>(kMultiLabelSize)) {
    throw Error(Errc::ShapeMismatch, "multi-label logits must be [N, 21]");
  }
  std::vector<Prediction> out(logits.dim(0));
  std::array<float, kMultiLabelSize> scores{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = nn::sigmoid(logits.at(i, j));
    const auto d = decode_multilabel(scores, threshold);
    out[i] = {d.cls, d.confidence, Source::MultiLabel};
  }
  return out;
}

inline std::vector<Prediction> predict_multiclass(const nn::Model<float>& model, std::span<const Image> images) {
  require_head(model, kNumClasses);
  return multiclass_from_logits(nn::predict_logits(model, nn::images_to_batch<float>(images, model.config.input_size)));
}

inline Prediction predict_multiclass(const nn::Model<float>& model, const Image& img) {
  return predict_multiclass(model, std::span<const Image>(&img, 1)).front();
}

inline std::vector<Prediction> predict_multilabel(const nn::Model<float>& model, std::span<const Image> images,
                                                  double threshold = 0.5) {
  require_head(model, kMultiLabelSize);
  return multilabel_from_logits(
      nn::predict_logits(model, nn::images_to_batch<float>(images, model.config.input_size)), threshold);
}

inline Prediction predict_multilabel(const nn::Model<float>& model, const Image& img, double threshold = 0.5) {
  return predict_multilabel(model, std::span<const Image>(&img, 1), threshold).front();
}

// ---------------------------------------------------------------------------
// Ensemble

enum class EnsembleRule {
  McFirst,          // mc if confident, else a recognized ml answer, else 100
  AgreementGated,   // agreeing heads win; otherwise the confident mc, else 100
  ConfidenceMax,    // whichever head is more confident (mc on ties)
};

inline std::string rule_name(EnsembleRule r) {
  switch (r) {
    case EnsembleRule::McFirst: return "mc-first";
    case EnsembleRule::AgreementGated: return "agreement-gated";
    case EnsembleRule::ConfidenceMax: return "confidence-max";
  }
  return "?";
}

inline EnsembleRule parse_rule(const std::string& s) {
  for (auto r : {EnsembleRule::McFirst, EnsembleRule::AgreementGated, EnsembleRule::ConfidenceMax}) {
    if (rule_name(r) == s) return r;
  }
  throw Error(Errc::ConfigError, "unknown ensemble rule '" + s + "'");
}

inline Prediction ensemble(const Prediction& mc, const Prediction& ml, double threshold,
                           EnsembleRule rule = EnsembleRule::McFirst) {
  const auto pick = [](const Prediction& p) { return Prediction{p.cls, p.confidence, Source::Ensemble}; };
  const Prediction none{kUnrecognizable, std::max(mc.confidence, ml.confidence), Source::Ensemble};
  switch (rule) {
    case EnsembleRule::McFirst:
      if (mc.confidence >= threshold) return pick(mc);
      if (ml.cls != kUnrecognizable) return pick(ml);
      return none;
    case EnsembleRule::AgreementGated:
      if (mc.cls == ml.cls) return pick(mc.confidence >= ml.confidence ? mc : ml);
      if (mc.confidence >= threshold) return pick(mc);
      return none;
    case EnsembleRule::ConfidenceMax:
      return pick(mc.confidence >= ml.confidence ? mc : ml);
  }
  return none;
}

// ---------------------------------------------------------------------------
// Evaluation

using ConfusionMatrix = std::vector<std::array<std::size_t, kNumClasses>>;

struct HeadMetrics {
  double accuracy = 0.0;
  ConfusionMatrix confusion = ConfusionMatrix(kNumClasses);  // [truth][predicted]
  std::array<std::size_t, kNumClasses> correct{};
};

struct EvalOptions {
  double threshold = 0.5;
  EnsembleRule rule = EnsembleRule::McFirst;
  /// Training-set class counts; enables the low-frequency slice.
  std::optional<std::map<int, std::size_t>> train_support;
  std::size_t low_support_below = 50;
};

struct EvalReport {
  std::size_t total = 0;
  std::string rule;
  double threshold = 0.5;
  std::array<std::size_t, kNumClasses> support{};
  std::optional<HeadMetrics> multiclass;
  std::optional<HeadMetrics> multilabel;
  std::optional<HeadMetrics> ensemble;
  std::optional<double> agreement_rate;
  std::vector<int> low_frequency_classes;
  std::map<std::string, std::optional<double>> low_frequency_accuracy;

  /// The ensemble when both heads ran, otherwise the single head.
  const HeadMetrics& primary() const {
    if (ensemble) return *ensemble;
    return multiclass ? *multiclass : *multilabel;
  }

  nlohmann::ordered_json to_json() const;
};

namespace detail {

inline void tally(HeadMetrics& h, int truth, int predicted) {
  ++h.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  if (truth == predicted) ++h.correct[static_cast<std::size_t>(truth)];
}

inline HeadMetrics score(std::span<const int> labels, std::span<const Prediction> preds) {
  HeadMetrics h;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    tally(h, labels[i], preds[i].cls);
    correct += labels[i] == preds[i].cls;
  }
  h.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  return h;
}

inline std::optional<double> slice_accuracy(const HeadMetrics& h, const std::array<std::size_t, kNumClasses>& support,
                                            std::span<const int> classes) {
  std::size_t n = 0, correct = 0;
  for (int c : classes) {
    n += support[static_cast<std::size_t>(c)];
    correct += h.correct[static_cast<std::size_t>(c)];
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(n);
}

inline nlohmann::ordered_json head_json(const HeadMetrics& h, const std::array<std::size_t, kNumClasses>& support) {
  nlohmann::ordered_json j;
  j["accuracy"] = h.accuracy;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < support.size(); ++c) {
    if (support[c] == 0) {
      per_class.push_back(nullptr);
    } else {
      per_class.push_back(static_cast<double>(h.correct[c]) / static_cast<double>(support[c]));
    }
  }
  j["per_class_accuracy"] = std::move(per_class);
  j["confusion"] = h.confusion;
  return j;
}

}  // namespace detail

/// Scores precomputed predictions. Either head may be absent; the ensemble
/// needs both.
inline EvalReport evaluate_predictions(std::span<const int> labels, std::optional<std::span<const Prediction>> mc,
                                       std::optional<std::span<const Prediction>> ml, const EvalOptions& options = {}) {
  if (labels.empty()) throw Error(Errc::DataError, "cannot evaluate an empty test set");
  if (!mc && !ml) throw Error(Errc::InvalidArgument, "evaluation needs at least one head");
  for (const auto* p : {mc ? &*mc : nullptr, ml ? &*ml : nullptr}) {
    if (p && p->size() != labels.size()) throw Error(Errc::ShapeMismatch, "prediction count differs from labels");
  }
  EvalReport r;
  r.total = labels.size();
  r.rule = rule_name(options.rule);
  r.threshold = options.threshold;
  for (int l : labels) {
    if (l < 0 || l >= kNumClasses) throw Error(Errc::OutOfRange, "label " + std::to_string(l) + " outside 0..100");
    ++r.support[static_cast<std::size_t>(l)];
  }
  if (mc) r.multiclass = detail::score(labels, *mc);
  if (ml) r.multilabel = detail::score(labels, *ml);
  if (mc && ml) {
    std::vector<Prediction> combined(labels.size());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      combined[i] = ensemble((*mc)[i], (*ml)[i], options.threshold, options.rule);
      agree += (*mc)[i].cls == (*ml)[i].cls;
    }
    r.ensemble = detail::score(labels, combined);
    r.agreement_rate = static_cast<double>(agree) / static_cast<double>(labels.size());
  }
  if (options.train_support) {
    for (int c = 0; c < kNumClasses; ++c) {
      const auto it = options.train_support->find(c);
      const std::size_t n = it == options.train_support->end() ? 0 : it->second;
      if (n < options.low_support_below && r.support[static_cast<std::size_t>(c)] > 0) r.low_frequency_classes.push_back(c);
    }
    if (r.multiclass) r.low_frequency_accuracy["multi-class"] = detail::slice_accuracy(*r.multiclass, r.support, r.low_frequency_classes);
    if (r.multilabel) r.low_frequency_accuracy["multi-label"] = detail::slice_accuracy(*r.multilabel, r.support, r.low_frequency_classes);
    if (r.ensemble) r.low_frequency_accuracy["ensemble"] = detail::slice_accuracy(*r.ensemble, r.support, r.low_frequency_classes);
  }
  return r;
}

inline nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["threshold"] = threshold;
  j["ensemble_rule"] = rule;
  j["support"] = support;
  j["heads"] = nlohmann::ordered_json::object();
  if (multiclass) j["heads"]["multi-class"] = detail::head_json(*multiclass, support);
  if (multilabel) j["heads"]["multi-label"] = detail::head_json(*multilabel, support);
  if (ensemble) {
    auto e = detail::head_json(*ensemble, support);
    e["rule"] = rule;
    j["heads"]["ensemble"] = std::move(e);
  }
  j["agreement_rate"] = agreement_rate ? nlohmann::ordered_json(*agreement_rate) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json low;
  low["classes"] = low_frequency_classes;
  low["accuracy"] = nlohmann::ordered_json::object();
  for (const auto& [head, acc] : low_frequency_accuracy) {
    low["accuracy"][head] = acc ? nlohmann::ordered_json(*acc) : nlohmann::ordered_json(nullptr);
  }
  j["low_frequency"] = std::move(low);
  return j;
}

/// Runs the given heads over every test record.
inline EvalReport evaluate(const nn::Model<float>* mc, const nn::Model<float>* ml, const Manifest& test,
                           const EvalOptions& options = {}, std::size_t batch_size = 64) {
  if (test.records.empty()) throw Error(Errc::DataError, "test manifest is empty");
  if (mc) require_head(*mc, kNumClasses);
  if (ml) require_head(*ml, kMultiLabelSize);
  train::ImageCache cache;
  std::vector<int> labels;
  std::vector<Prediction> mc_preds, ml_preds;
  std::vector<Image> images;
  for (std::size_t start = 0; start < test.records.size(); start += batch_size) {
    const std::size_t end = std::min(test.records.size(), start + batch_size);
    images.clear();
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(cache.get(test, test.records[i]));
      labels.push_back(test.records[i].cls);
    }
    if (mc) {
      auto p = predict_multiclass(*mc, images);
      mc_preds.insert(mc_preds.end(), p.begin(), p.end());
    }
    if (ml) {
      auto p = predict_multilabel(*ml, images, options.threshold);
      ml_preds.insert(ml_preds.end(), p.begin(), p.end());
    }
  }
  std::optional<std::span<const Prediction>> mc_span, ml_span;
  if (mc) mc_span = std::span<const Prediction>(mc_preds);
  if (ml) ml_span = std::span<const Prediction>(ml_preds);
  return evaluate_predictions(labels, mc_span, ml_span, options);
}

// ---------------------------------------------------------------------------
// Report files

inline void write_confusion_csv(const ConfusionMatrix& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write " + path.string());
  os << "truth";
  for (int c = 0; c < kNumClasses; ++c) os << ',' << c;
  os << '\n';
  for (int t = 0; t < kNumClasses; ++t) {
    os << t;
    for (std::size_t v : m[static_cast<std::size_t>(t)]) os << ',' << v;
    os << '\n';
  }
  if (!os) throw Error(Errc::IoError, "write failed for " + path.string());
}

/// Row-normalized heatmap, `cell` pixels per entry, white (0) to navy (1).
inline Image confusion_heatmap(const ConfusionMatrix& m, int cell = 4) {
  const int side = kNumClasses * cell;
  Image img(side, side, Color{255, 255, 255});
  for (int t = 0; t < kNumClasses; ++t) {
    std::size_t row_total = 0;
    for (std::size_t v : m[static_cast<std::size_t>(t)]) row_total += v;
    if (row_total == 0) continue;
    for (int p = 0; p < kNumClasses; ++p) {
      const double f = static_cast<double>(m[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]) /
                       static_cast<double>(row_total);
      const Color c{round_clamp_u8(static_cast<float>(255.0 * (1.0 - f))),
                    round_clamp_u8(static_cast<float>(255.0 - f * (255.0 - 34.0))),
                    round_clamp_u8(static_cast<float>(255.0 - f * (255.0 - 68.0)))};
      for (int y = 0; y < cell; ++y) {
        for (int x = 0; x < cell; ++x) img.set_pixel(p * cell + x, t * cell + y, c);
      }
    }
  }
  return img;
}

}  // namespace jersey::infer
