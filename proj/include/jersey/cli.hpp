#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "jersey/augment.hpp"
#include "jersey/datasets.hpp"
#include "jersey/error.hpp"
#include "jersey/infer.hpp"
#include "jersey/localization.hpp"
#include "jersey/nn/checkpoint.hpp"
#include "jersey/synth.hpp"
#include "jersey/train.hpp"

// Command layer behind the jerseyctl tool. Each command takes a RunConfig
// (JSON file plus flag overrides) and returns a process exit status:
// 0 success, 1 configuration or usage error, 2 runtime data error.

namespace jersey::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;

/// Flag values; each one set here wins over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<double> threshold;
  std::optional<int> jobs;
  std::optional<fs::path> resume;
  bool dry_run = false;
  bool allow_16bit = false;
};

struct StageSpec {
  std::string name;
  fs::path manifest;
  int epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.01;
  double momentum = 0.9;
  bool cosine = true;
  std::optional<augment::Level> augment;
  double val_fraction = 0.1;
  std::optional<std::size_t> balance_target;
  int early_stop_patience = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  fs::path out;
  double threshold = 0.5;
  int jobs = 1;
  bool dry_run = false;
  std::optional<fs::path> resume;
  PngOptions png;  // applies to user-supplied images (backgrounds, player crops)

  // Generators
  synth::GenConfig gen;
  std::optional<std::vector<synth::ColorPair>> palette;
  fs::path numbers;      // gen-complex2d: Simple2D manifest
  fs::path backgrounds;  // gen-complex2d: background PNG directory

  // Cropping
  fs::path keypoints;
  fs::path images;
  double expand = 0.6;
  double min_confidence = 0.5;

  // Training
  nn::Objective objective = nn::Objective::MultiClass;
  nn::CnnConfig model;
  std::vector<StageSpec> stages;

  // Evaluation
  fs::path test;
  std::optional<fs::path> mc_checkpoint;
  std::optional<fs::path> ml_checkpoint;
  std::optional<fs::path> train_manifest;
  infer::EnsembleRule rule = infer::EnsembleRule::McFirst;
  bool heatmap = false;

  synth::Palette palette_or_default() const {
    return palette ? synth::Palette(*palette) : synth::default_palette();
  }
};

namespace detail {

inline Color parse_color(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::ConfigError, "colors are [r, g, b] arrays");
  auto channel = [&](std::size_t i) {
    const int v = j[i].get<int>();
    if (v < 0 || v > 255) throw Error(Errc::ConfigError, "color channel outside 0-255");
    return static_cast<std::uint8_t>(v);
  };
  return {channel(0), channel(1), channel(2)};
}

inline std::pair<double, double> parse_range(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) throw Error(Errc::ConfigError, std::string(what) + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline augment::Params parse_params(const json& j) {
  augment::Params p;
  p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  p.optical_k = j.value("optical_k", p.optical_k);
  p.grid_cells = j.value("grid_cells", p.grid_cells);
  p.grid_magnitude = j.value("grid_magnitude", p.grid_magnitude);
  p.shift_limit = j.value("shift_limit", p.shift_limit);
  p.scale_limit = j.value("scale_limit", p.scale_limit);
  p.rotate_limit = j.value("rotate_limit", p.rotate_limit);
  return p;
}

inline fs::path resolve(const fs::path& base, const json& j) {
  const fs::path p = j.get<std::string>();
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

/// Binds a parsed config document. Relative paths are taken relative to
/// `base` (the config file's directory). Throws ConfigError.
inline RunConfig bind_config(const json& doc, const fs::path& base, const Overrides& flags) {
  RunConfig c;
  try {
    if (!doc.is_object()) throw Error(Errc::ConfigError, "config must be a JSON object");
    if (flags.seed) {
      c.seed = *flags.seed;
    } else if (doc.contains("seed")) {
      c.seed = doc.at("seed").get<std::uint64_t>();
    } else {
      throw Error(Errc::ConfigError, "a seed is required (config \"seed\" or --seed)");
    }
    if (flags.out) {
      c.out = *flags.out;
    } else if (doc.contains("out")) {
      c.out = detail::resolve(base, doc.at("out"));
    } else {
      throw Error(Errc::ConfigError, "an output directory is required (config \"out\" or --out)");
    }
    c.threshold = flags.threshold.value_or(doc.value("threshold", c.threshold));
    if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw Error(Errc::ConfigError, "threshold must be in [0, 1]");
    c.jobs = flags.jobs.value_or(doc.value("jobs", c.jobs));
    if (c.jobs < 1) throw Error(Errc::ConfigError, "jobs must be >= 1");
    c.dry_run = flags.dry_run;
    c.resume = flags.resume;
    c.png.allow_16bit = flags.allow_16bit || doc.value("allow_16bit", false);

    c.gen.seed = AugSeed(c.seed);
    c.gen.jobs = c.jobs;
    c.gen.png = c.png;
    if (doc.contains("generator")) {
      const json& g = doc.at("generator");
      c.gen.per_class_target = g.value("per_class_target", c.gen.per_class_target);
      c.gen.per_color_pool = g.value("per_color_pool", c.gen.per_color_pool);
      c.gen.canvas = g.value("canvas", c.gen.canvas);
      c.gen.classes = g.value("classes", c.gen.classes);
      c.gen.include_no_number_class = g.value("include_no_number_class", c.gen.include_no_number_class);
      if (g.contains("scale")) std::tie(c.gen.scale_lo, c.gen.scale_hi) = detail::parse_range(g.at("scale"), "scale");
      if (g.contains("patch")) std::tie(c.gen.patch_lo, c.gen.patch_hi) = detail::parse_range(g.at("patch"), "patch");
      if (g.contains("augment")) c.gen.aug = detail::parse_params(g.at("augment"));
      if (g.contains("font") && !g.at("font").is_null()) {
        c.gen.font = synth::FontSource::from_file(detail::resolve(base, g.at("font")));
      }
      if (g.contains("palette")) {
        std::vector<synth::ColorPair> pairs;
        for (const auto& p : g.at("palette")) {
          pairs.push_back({detail::parse_color(p.at("background")), detail::parse_color(p.at("foreground"))});
        }
        c.palette = std::move(pairs);
      }
      if (g.contains("numbers")) c.numbers = detail::resolve(base, g.at("numbers"));
      if (g.contains("backgrounds")) c.backgrounds = detail::resolve(base, g.at("backgrounds"));
    }

    if (doc.contains("crop")) {
      const json& k = doc.at("crop");
      if (k.contains("keypoints")) c.keypoints = detail::resolve(base, k.at("keypoints"));
      if (k.contains("images")) c.images = detail::resolve(base, k.at("images"));
      c.expand = k.value("expand", c.expand);
      c.min_confidence = k.value("min_confidence", c.min_confidence);
    }

    if (doc.contains("train")) {
      const json& t = doc.at("train");
      c.objective = nn::parse_objective(t.value("objective", std::string("multi-class")));
      json model = t.value("model", json::object());
      if (!model.contains("head")) model["head"] = nn::head_size(c.objective);
      if (!model.contains("seed")) model["seed"] = AugSeed(c.seed).child(0xCEE).value();
      c.model = nn::CnnConfig::from_json(model);
      for (const auto& s : t.at("stages")) {
        StageSpec spec;
        spec.name = s.value("name", "stage" + std::to_string(c.stages.size()));
        spec.manifest = detail::resolve(base, s.at("manifest"));
        spec.epochs = s.value("epochs", spec.epochs);
        spec.batch_size = s.value("batch_size", spec.batch_size);
        spec.lr = s.value("lr", spec.lr);
        spec.momentum = s.value("momentum", spec.momentum);
        spec.cosine = s.value("cosine", spec.cosine);
        if (s.contains("augment") && !s.at("augment").is_null()) {
          spec.augment = augment::parse_level(s.at("augment").get<std::string>());
        }
        spec.val_fraction = s.value("val_fraction", spec.val_fraction);
        if (s.contains("balance_target")) spec.balance_target = s.at("balance_target").get<std::size_t>();
        spec.early_stop_patience = s.value("early_stop_patience", spec.early_stop_patience);
        c.stages.push_back(std::move(spec));
      }
    }

    if (doc.contains("eval")) {
      const json& e = doc.at("eval");
      if (e.contains("test")) c.test = detail::resolve(base, e.at("test"));
      if (e.contains("multi_class")) c.mc_checkpoint = detail::resolve(base, e.at("multi_class"));
      if (e.contains("multi_label")) c.ml_checkpoint = detail::resolve(base, e.at("multi_label"));
      if (e.contains("train_manifest")) c.train_manifest = detail::resolve(base, e.at("train_manifest"));
      c.rule = infer::parse_rule(e.value("rule", std::string("mc-first")));
      c.heatmap = e.value("heatmap", c.heatmap);
    }
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError || e.code() == Errc::HeadMismatch) throw;
    throw Error(Errc::ConfigError, e.what());
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return c;
}

inline RunConfig load_config(const fs::path& path, const Overrides& flags) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::ConfigError, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
  return bind_config(doc, path.parent_path(), flags);
}

namespace detail {

inline void require_file(const fs::path& p, const char* what) {
  std::error_code ec;
  if (p.empty() || !fs::is_regular_file(p, ec)) throw Error(Errc::ConfigError, std::string(what) + " not found: " + p.string());
}

inline void require_dir(const fs::path& p, const char* what) {
  std::error_code ec;
  if (p.empty() || !fs::is_directory(p, ec)) throw Error(Errc::ConfigError, std::string(what) + " not found: " + p.string());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write " + path.string());
  os << text;
  if (!os) throw Error(Errc::IoError, "write failed for " + path.string());
}

inline void print_counts(std::ostream& os, const std::map<int, std::size_t>& counts) {
  for (const auto& [cls, n] : counts) os << cls << '\t' << n << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each throws jersey::Error; run() maps errors to exit codes.

inline void gen_simple2d(const RunConfig& c, std::ostream& out) {
  const auto palette = c.palette_or_default();
  c.gen.validate(palette.size());
  if (c.dry_run) {
    detail::print_counts(out, synth::plan_counts(c.gen, false));
    return;
  }
  const Manifest m = synth::gen_simple2d(c.gen, palette, c.out);
  detail::print_counts(out, m.class_counts());
}

inline void gen_complex2d(const RunConfig& c, std::ostream& out) {
  detail::require_file(c.numbers, "numbers manifest");
  detail::require_dir(c.backgrounds, "backgrounds directory");
  c.gen.validate();
  if (c.dry_run) {
    detail::print_counts(out, synth::plan_counts(c.gen, c.gen.include_no_number_class));
    return;
  }
  const Manifest numbers = read_manifest(c.numbers);
  const Manifest m = synth::gen_complex2d(numbers, c.backgrounds, c.gen, c.out);
  detail::print_counts(out, m.class_counts());
}

/// Crops every usable keypoint record. Records that cannot be cropped
/// (schema errors, low confidence, degenerate boxes) are skipped with a
/// warning; a run that crops nothing is a data error.
inline void crop(const RunConfig& c, std::ostream& out, std::ostream& err) {
  detail::require_file(c.keypoints, "keypoint file");
  detail::require_dir(c.images, "images directory");
  if (!(c.expand >= 0.0)) throw Error(Errc::ConfigError, "expand must be >= 0");
  std::vector<localization::IngestWarning> warnings;
  const auto records = localization::ingest_keypoints(c.keypoints, c.images, &warnings, c.png);
  for (const auto& w : warnings) err << "warning: line " << w.line << ": " << w.message << '\n';
  if (c.dry_run) {
    out << records.size() << " records to crop\n";
    return;
  }
  synth::detail::ensure_dir(c.out);
  std::string index;
  std::size_t written = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Image torso;
    try {
      torso = localization::crop_torso(r.player, r.keypoints, c.expand, c.min_confidence);
    } catch (const Error& e) {
      err << "warning: " << r.image << ": " << e.what() << '\n';
      continue;
    }
    const std::string name = std::to_string(written) + "_" + fs::path(r.image).stem().string() + ".png";
    save_png(torso, c.out / name);
    index += json{{"path", name}, {"image", r.image}}.dump() + "\n";
    ++written;
  }
  if (written == 0) throw Error(Errc::DataError, "no usable keypoint records in " + c.keypoints.string());
  detail::write_text(c.out / "crops.jsonl", index);
  out << written << " crops written\n";
}

/// Trains the configured stages. Writes stage<k>.ckpt after every stage,
/// model.ckpt for the final parameters, report.json (deterministic) and
/// timing.json (wall-clock per stage).
inline void train(const RunConfig& c, std::ostream& out) {
  if (c.stages.empty()) throw Error(Errc::ConfigError, "train needs at least one stage");
  train::check_head(c.model, c.objective);
  for (const auto& s : c.stages) detail::require_file(s.manifest, "stage manifest");
  std::optional<nn::Checkpoint> resumed;
  if (c.resume) {
    detail::require_file(*c.resume, "resume checkpoint");
    resumed = nn::load_checkpoint(*c.resume);
    if (!(resumed->model.config == c.model)) {
      throw Error(Errc::HeadMismatch, "resume checkpoint model differs from the configured model");
    }
  }

  std::vector<train::StageConfig> stages;
  for (const auto& s : c.stages) {
    train::StageConfig st;
    st.name = s.name;
    st.manifest = s.manifest;
    st.objective = c.objective;
    st.epochs = s.epochs;
    st.batch_size = s.batch_size;
    st.lr = s.lr;
    st.momentum = s.momentum;
    st.cosine = s.cosine;
    if (s.augment) st.augment = augment::Policy{*s.augment, c.gen.aug};
    st.val_fraction = s.val_fraction;
    st.balance_target = s.balance_target;
    st.early_stop_patience = s.early_stop_patience;
    st.validate();
    stages.push_back(std::move(st));
  }
  if (c.dry_run) {
    for (const auto& s : stages) out << s.name << '\t' << s.manifest.string() << '\t' << s.epochs << " epochs\n";
    return;
  }
  synth::detail::ensure_dir(c.out);

  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  nlohmann::ordered_json timing = nlohmann::ordered_json::array();
  std::optional<std::pair<std::size_t, nn::Model<float>>> resume;
  if (resumed) {
    const std::size_t done = resumed->metadata.value("stages_completed", std::size_t{0});
    if (done > stages.size()) throw Error(Errc::ConfigError, "resume checkpoint is past the last configured stage");
    reports = resumed->metadata.value("reports", nlohmann::ordered_json::array());
    resume.emplace(done, std::move(resumed->model));
  }
  const auto save_stage = [&](std::size_t k, const nn::Model<float>& model, const train::TrainReport& report) {
    reports.push_back(report.to_json());
    timing.push_back({{"stage", report.stage}, {"wall_seconds", report.wall_seconds}});
    nn::Checkpoint ckpt{model, nlohmann::ordered_json{{"objective", nn::objective_name(c.objective)},
                                {"seed", c.seed},
                                {"stages_completed", k + 1},
                                {"reports", reports}}};
    nn::save_checkpoint(ckpt, c.out / ("stage" + std::to_string(k) + ".ckpt"));
    out << report.stage << ": epoch " << report.selected_epoch << " val " << report.selected_val_accuracy << '\n';
  };
  auto result = train::run_curriculum(c.model, stages, AugSeed(c.seed), save_stage, std::move(resume));
  nn::Checkpoint final{std::move(result.model), nlohmann::ordered_json{{"objective", nn::objective_name(c.objective)},
                                                 {"seed", c.seed},
                                                 {"stages_completed", stages.size()},
                                                 {"reports", reports}}};
  nn::save_checkpoint(final, c.out / "model.ckpt");
  detail::write_text(c.out / "report.json", reports.dump(2) + "\n");
  detail::write_text(c.out / "timing.json", timing.dump(2) + "\n");
}

/// Evaluates one or both heads. Writes eval.json, confusion_<head>.csv and,
/// when enabled, confusion_<head>.png.
inline void eval(const RunConfig& c, std::ostream& out) {
  if (!c.mc_checkpoint && !c.ml_checkpoint) throw Error(Errc::ConfigError, "eval needs a multi_class or multi_label checkpoint");
  detail::require_file(c.test, "test manifest");
  if (c.mc_checkpoint) detail::require_file(*c.mc_checkpoint, "multi-class checkpoint");
  if (c.ml_checkpoint) detail::require_file(*c.ml_checkpoint, "multi-label checkpoint");
  if (c.train_manifest) detail::require_file(*c.train_manifest, "train manifest");
  std::optional<nn::Checkpoint> mc, ml;
  if (c.mc_checkpoint) mc = nn::load_checkpoint(*c.mc_checkpoint);
  if (c.ml_checkpoint) ml = nn::load_checkpoint(*c.ml_checkpoint);
  if (mc && mc->model.config.head != kNumClasses) throw Error(Errc::HeadMismatch, "multi_class checkpoint has head " + std::to_string(mc->model.config.head));
  if (ml && ml->model.config.head != kMultiLabelSize) throw Error(Errc::HeadMismatch, "multi_label checkpoint has head " + std::to_string(ml->model.config.head));
  if (c.dry_run) {
    out << "would evaluate " << c.test.string() << '\n';
    return;
  }
  const Manifest test = read_manifest(c.test);
  infer::EvalOptions options;
  options.threshold = c.threshold;
  options.rule = c.rule;
  if (c.train_manifest) options.train_support = read_manifest(*c.train_manifest).class_counts();
  const auto report = infer::evaluate(mc ? &mc->model : nullptr, ml ? &ml->model : nullptr, test, options);

  synth::detail::ensure_dir(c.out);
  detail::write_text(c.out / "eval.json", report.to_json().dump(2) + "\n");
  const auto emit = [&](const char* head, const std::optional<infer::HeadMetrics>& h) {
    if (!h) return;
    infer::write_confusion_csv(h->confusion, c.out / (std::string("confusion_") + head + ".csv"));
    if (c.heatmap) save_png(infer::confusion_heatmap(h->confusion), c.out / (std::string("confusion_") + head + ".png"));
    out << head << " accuracy " << h->accuracy << '\n';
  };
  emit("multi_class", report.multiclass);
  emit("multi_label", report.multilabel);
  emit("ensemble", report.ensemble);
  if (report.agreement_rate) out << "agreement " << *report.agreement_rate << '\n';
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"gen-simple2d", "gen-complex2d", "crop", "train", "eval"};
  return names;
}

inline bool is_config_error(Errc code) {
  return code == Errc::ConfigError || code == Errc::HeadMismatch || code == Errc::FontLoadError;
}

/// Loads the config, runs `command` and maps failures to exit codes. All
/// diagnostics go to `err`.
inline int run(const std::string& command, const fs::path& config_path, const Overrides& flags,
               std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  try {
    c = load_config(config_path, flags);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    if (command == "gen-simple2d") {
      gen_simple2d(c, out);
    } else if (command == "gen-complex2d") {
      gen_complex2d(c, out);
    } else if (command == "crop") {
      crop(c, out, err);
    } else if (command == "train") {
      train(c, out);
    } else if (command == "eval") {
      eval(c, out);
    } else {
      err << "error: unknown command '" << command << "'\n";
      return kExitConfig;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_config_error(e.code()) ? kExitConfig : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace jersey::cli
