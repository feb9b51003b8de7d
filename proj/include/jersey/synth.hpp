#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jersey/augment.hpp"
#include "jersey/datasets.hpp"
#include "jersey/error.hpp"
#include "jersey/imaging.hpp"
#include "jersey/parallel.hpp"
#include "jersey/rng.hpp"

namespace jersey::synth {

// ---------------------------------------------------------------------------
// Glyph sources

/// Monochrome digit sheet: a PNG whose width is split into ten equal cells
/// holding the digits 0-9 left to right. Bright pixels (luma >= 128) are ink.
class GlyphSheet {
 public:
  explicit GlyphSheet(const std::filesystem::path& path) {
    Image sheet;
    try {
      sheet = load_png(path);
    } catch (const Error& e) {
      throw Error(Errc::FontLoadError, std::string("cannot read glyph sheet: ") + e.what());
    }
    if (sheet.width() < 10 || sheet.height() < 1) throw Error(Errc::FontLoadError, "glyph sheet too small");
    const int cell = sheet.width() / 10;
    for (int d = 0; d < 10; ++d) {
      auto& g = glyphs_[static_cast<std::size_t>(d)];
      int x0 = cell, y0 = sheet.height(), x1 = -1, y1 = -1;
      for (int y = 0; y < sheet.height(); ++y) {
        for (int x = 0; x < cell; ++x) {
          const Color c = sheet.pixel(d * cell + x, y);
          if (299 * c.r + 587 * c.g + 114 * c.b >= 128 * 1000) {
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
          }
        }
      }
      if (x1 < 0) throw Error(Errc::FontLoadError, "glyph sheet has no ink for digit " + std::to_string(d));
      g.width = x1 - x0 + 1;
      g.height = y1 - y0 + 1;
      g.mask.resize(static_cast<std::size_t>(g.width * g.height));
      for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) {
          const Color c = sheet.pixel(d * cell + x0 + x, y0 + y);
          g.mask[static_cast<std::size_t>(y * g.width + x)] = (299 * c.r + 587 * c.g + 114 * c.b) / (255.0f * 1000.0f);
        }
      }
    }
  }

  /// Ink coverage in [0, 1] at continuous glyph coordinates (u, v) in [0, 1].
  float coverage(int digit, float u, float v) const {
    const auto& g = glyphs_[static_cast<std::size_t>(digit)];
    const float x = std::clamp(u * static_cast<float>(g.width) - 0.5f, 0.0f, static_cast<float>(g.width - 1));
    const float y = std::clamp(v * static_cast<float>(g.height) - 0.5f, 0.0f, static_cast<float>(g.height - 1));
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, g.width - 1), y1 = std::min(y0 + 1, g.height - 1);
    const float fx = x - static_cast<float>(x0), fy = y - static_cast<float>(y0);
    auto m = [&](int xx, int yy) { return g.mask[static_cast<std::size_t>(yy * g.width + xx)]; };
    return (m(x0, y0) * (1 - fx) + m(x1, y0) * fx) * (1 - fy) + (m(x0, y1) * (1 - fx) + m(x1, y1) * fx) * fy;
  }

  /// Width / height of the digit's ink bounding box.
  float aspect(int digit) const {
    const auto& g = glyphs_[static_cast<std::size_t>(digit)];
    return static_cast<float>(g.width) / static_cast<float>(g.height);
  }

 private:
  struct Glyph {
    int width = 0;
    int height = 0;
    std::vector<float> mask;
  };
  std::array<Glyph, 10> glyphs_;
};

/// Either the built-in block-segment digits or a loaded glyph sheet.
class FontSource {
 public:
  FontSource() = default;

  static FontSource builtin() { return {}; }

  static FontSource from_file(const std::filesystem::path& path) {
    FontSource f;
    f.sheet_ = std::make_shared<const GlyphSheet>(path);
    f.name_ = path.string();
    return f;
  }

  bool is_builtin() const { return sheet_ == nullptr; }
  const GlyphSheet* sheet() const { return sheet_.get(); }
  const std::string& name() const { return name_; }

 private:
  std::shared_ptr<const GlyphSheet> sheet_;
  std::string name_ = "builtin-segments";
};

class GlyphSpec {
 public:
  GlyphSpec(int digit, Color foreground, Color background, double scale_lo, double scale_hi,
            FontSource font = FontSource::builtin())
      : digit_(digit), foreground_(foreground), background_(background), scale_lo_(scale_lo), scale_hi_(scale_hi),
        font_(std::move(font)) {
    if (digit < 0 || digit > 9) throw Error(Errc::InvalidArgument, "digit must be 0-9");
    if (foreground == background) throw Error(Errc::InvalidArgument, "foreground and background colors are equal");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0)) {
      throw Error(Errc::InvalidArgument, "scale range must satisfy 0 < a <= b <= 1");
    }
  }

  int digit() const { return digit_; }
  Color foreground() const { return foreground_; }
  Color background() const { return background_; }
  double scale_lo() const { return scale_lo_; }
  double scale_hi() const { return scale_hi_; }
  const FontSource& font() const { return font_; }

 private:
  int digit_;
  Color foreground_;
  Color background_;
  double scale_lo_;
  double scale_hi_;
  FontSource font_;
};

namespace detail {

// Segment bits: a=0 (top), b=1 (upper right), c=2 (lower right), d=3 (bottom),
// e=4 (lower left), f=5 (upper left), g=6 (middle).
inline constexpr std::array<std::uint8_t, 10> kSegments = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
};

/// Built-in digit coverage at glyph coordinates (u, v) in [0, 1]^2 with
/// relative stroke thickness `t` (fraction of glyph height).
inline bool segment_ink(int digit, float u, float v, float aspect, float t) {
  const std::uint8_t seg = kSegments[static_cast<std::size_t>(digit)];
  const float tu = t / aspect;  // thickness in u units
  const float mid_lo = 0.5f - 0.5f * t;
  const float mid_hi = 0.5f + 0.5f * t;
  if (digit == 1) return std::abs(u - 0.5f) <= 0.5f * tu;  // centered single stroke
  auto on = [&](int s) { return (seg >> s) & 1; };
  if (on(0) && v <= t) return true;
  if (on(3) && v >= 1.0f - t) return true;
  if (on(6) && v >= mid_lo && v <= mid_hi) return true;
  if (on(5) && u <= tu && v <= mid_hi) return true;
  if (on(1) && u >= 1.0f - tu && v <= mid_hi) return true;
  if (on(4) && u <= tu && v >= mid_lo) return true;
  if (on(2) && u >= 1.0f - tu && v >= mid_lo) return true;
  return false;
}

inline Color blend(Color bg, Color fg, float a) {
  auto mix = [a](std::uint8_t b, std::uint8_t f) {
    return round_clamp_u8(static_cast<float>(b) * (1.0f - a) + static_cast<float>(f) * a);
  };
  return {mix(bg.r, fg.r), mix(bg.g, fg.g), mix(bg.b, fg.b)};
}

}  // namespace detail

/// Renders one digit centered on a `canvas`-sized square. The seed draws the
/// glyph scale from U(a, b) (never below 0.25 of the canvas height) and a
/// small stroke-weight variation for the built-in font.
inline Image render_digit(const GlyphSpec& spec, AugSeed seed, int canvas = 100) {
  if (canvas < 4) throw Error(Errc::InvalidArgument, "canvas too small");
  Rng rng = seed.rng();
  const double scale = std::max(0.25, rng.uniform(spec.scale_lo(), spec.scale_hi()));
  const float stroke = static_cast<float>(rng.uniform(0.15, 0.19));

  const GlyphSheet* sheet = spec.font().sheet();
  const float glyph_h = static_cast<float>(scale) * static_cast<float>(canvas);
  const float aspect = sheet ? sheet->aspect(spec.digit()) : 0.58f;
  const float glyph_w = std::min(glyph_h * aspect, 0.95f * static_cast<float>(canvas));
  const float x0 = 0.5f * (static_cast<float>(canvas) - glyph_w);
  const float y0 = 0.5f * (static_cast<float>(canvas) - glyph_h);

  constexpr int kSuper = 4;
  Image img(canvas, canvas, spec.background());
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      float ink = 0.0f;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const float px = static_cast<float>(x) + (static_cast<float>(sx) + 0.5f) / kSuper;
          const float py = static_cast<float>(y) + (static_cast<float>(sy) + 0.5f) / kSuper;
          const float u = (px - x0) / glyph_w;
          const float v = (py - y0) / glyph_h;
          if (u < 0.0f || u > 1.0f || v < 0.0f || v > 1.0f) continue;
          ink += sheet ? sheet->coverage(spec.digit(), u, v)
                       : (detail::segment_ink(spec.digit(), u, v, glyph_w / glyph_h, stroke) ? 1.0f : 0.0f);
        }
      }
      ink /= kSuper * kSuper;
      if (ink > 0.0f) img.set_pixel(x, y, detail::blend(spec.background(), spec.foreground(), ink));
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Palettes and generator configuration

struct ColorPair {
  Color background;
  Color foreground;
};

class Palette {
 public:
  explicit Palette(std::vector<ColorPair> combinations) : combinations_(std::move(combinations)) {
    if (combinations_.empty()) throw Error(Errc::ConfigError, "palette has no color combinations");
    for (const auto& p : combinations_) {
      const int diff = std::max({std::abs(p.background.r - p.foreground.r), std::abs(p.background.g - p.foreground.g),
                                 std::abs(p.background.b - p.foreground.b)});
      if (diff < 32) throw Error(Errc::ConfigError, "palette pair colors are not distinguishable");
    }
  }

  const std::vector<ColorPair>& combinations() const { return combinations_; }
  std::size_t size() const { return combinations_.size(); }

 private:
  std::vector<ColorPair> combinations_;
};

namespace colors {
inline constexpr Color kRed{200, 16, 46};
inline constexpr Color kNavy{0, 34, 68};
inline constexpr Color kGreen{105, 190, 40};
inline constexpr Color kYellow{255, 205, 0};
inline constexpr Color kWhite{255, 255, 255};
}  // namespace colors

/// Jersey palette: five background colors, each paired with a contrasting
/// number color.
inline Palette default_palette() {
  using namespace colors;
  return Palette({{kNavy, kWhite}, {kWhite, kNavy}, {kGreen, kNavy}, {kRed, kWhite}, {kYellow, kNavy}});
}

struct GenConfig {
  std::size_t per_class_target = 4000;
  std::size_t per_color_pool = 1000;
  int canvas = 100;
  std::vector<int> classes = default_classes();
  bool include_no_number_class = true;
  double scale_lo = 0.5;
  double scale_hi = 0.9;
  double patch_lo = 0.2;  // Complex2D patch side as a fraction of the background's short side
  double patch_hi = 0.6;
  FontSource font = FontSource::builtin();
  augment::Params aug;
  AugSeed seed{0};
  int jobs = 1;
  PngOptions png;  // decoding of user-supplied backgrounds

  static std::vector<int> default_classes() {
    std::vector<int> c(100);
    for (int i = 0; i < 100; ++i) c[static_cast<std::size_t>(i)] = i;
    return c;
  }

  /// Checks shared by both generators. Pass the palette size to also check
  /// that Simple2D's candidate pools can supply per_class_target images.
  void validate(std::optional<std::size_t> combinations = std::nullopt) const {
    if (per_class_target < 1) throw Error(Errc::ConfigError, "per_class_target must be >= 1");
    if (combinations && per_class_target > per_color_pool * *combinations) {
      throw Error(Errc::ConfigError, "per_class_target " + std::to_string(per_class_target) + " exceeds pool " +
                                         std::to_string(per_color_pool) + " x " + std::to_string(*combinations) +
                                         " color combinations");
    }
    if (canvas < 16) throw Error(Errc::ConfigError, "canvas must be >= 16");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0)) {
      throw Error(Errc::ConfigError, "scale range must satisfy 0 < a <= b <= 1");
    }
    if (!(patch_lo > 0.0 && patch_lo <= patch_hi && patch_hi <= 1.0)) {
      throw Error(Errc::ConfigError, "patch range must satisfy 0 < lo <= hi <= 1");
    }
    if (classes.empty()) throw Error(Errc::ConfigError, "class list is empty");
    for (int c : classes) {
      if (c < 0 || c > 99) throw Error(Errc::ConfigError, "number classes must be in 0-99");
    }
  }
};

/// Augmentation level for the j-th candidate of a color pool: one Light,
/// five Medium and five Hard per cycle of eleven.
inline augment::Level pool_level(std::size_t j) {
  const std::size_t r = j % 11;
  if (r == 0) return augment::Level::Light;
  return r <= 5 ? augment::Level::Medium : augment::Level::Hard;
}

namespace detail {

inline std::vector<int> sorted_classes(const std::vector<int>& classes) {
  std::vector<int> c = classes;
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(Errc::IoError, "cannot create directory " + dir.string());
}

inline std::string record_path(int cls, std::size_t index) {
  return std::to_string(cls) + "/" + std::to_string(index) + ".png";
}

/// Partial Fisher-Yates: `k` distinct values from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

inline constexpr std::uint64_t kSimpleTag = 0x51;
inline constexpr std::uint64_t kComplexTag = 0xC2;

}  // namespace detail

/// Builds one Simple2D candidate: each digit rendered, augmented at the
/// candidate's level, two-digit numbers concatenated, result resized.
inline Image simple2d_candidate(int number, const ColorPair& colors, augment::Level level, const GenConfig& config,
                                AugSeed seed) {
  const Digits digits = digits_for_class(number);
  std::vector<int> parts;
  if (digits.left) parts.push_back(*digits.left);
  parts.push_back(*digits.right);
  const augment::Policy policy{level, config.aug};
  Image out;
  for (std::size_t pos = 0; pos < parts.size(); ++pos) {
    const GlyphSpec spec(parts[pos], colors.foreground, colors.background, config.scale_lo, config.scale_hi,
                         config.font);
    Image digit = render_digit(spec, seed.child({1, pos}), config.canvas);
    digit = augment::apply_policy(digit, policy, seed.child({2, pos}));
    if (parts.size() == 2) digit = resize_bilinear(digit, config.canvas / 2, config.canvas);
    out = concat_horizontal(out, digit);
  }
  return resize_bilinear(out, config.canvas, config.canvas);
}

/// Per-class row counts a generator run will produce.
inline std::map<int, std::size_t> plan_counts(const GenConfig& config, bool with_no_number_class) {
  std::map<int, std::size_t> plan;
  for (int c : detail::sorted_classes(config.classes)) plan[c] = config.per_class_target;
  if (with_no_number_class) plan[kUnrecognizable] = config.per_class_target;
  return plan;
}

/// Simple2D: per class, a pool of `per_color_pool` candidates per color
/// combination, of which `per_class_target` are sampled without replacement.
/// Only the sampled candidates are rendered; each is a pure function of its
/// (class, candidate id) seed, so this equals rendering the whole pool.
inline Manifest gen_simple2d(const GenConfig& config, const Palette& palette, const std::filesystem::path& out_dir) {
  config.validate(palette.size());
  const auto classes = detail::sorted_classes(config.classes);
  const std::size_t pool = config.per_color_pool * palette.size();

  struct Job {
    int cls;
    std::size_t row;
    std::size_t candidate;
  };
  std::vector<Job> jobs;
  for (int cls : classes) {
    Rng rng = config.seed.child({detail::kSimpleTag, static_cast<std::uint64_t>(cls)}).rng();
    auto picks = detail::sample_without_replacement(pool, config.per_class_target, rng);
    std::sort(picks.begin(), picks.end());
    for (std::size_t row = 0; row < picks.size(); ++row) jobs.push_back({cls, row, picks[row]});
    detail::ensure_dir(out_dir / std::to_string(cls));
  }

  Manifest m{out_dir, std::vector<Record>(jobs.size())};
  parallel_for(jobs.size(), config.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::size_t combo = job.candidate / config.per_color_pool;
    const std::size_t j = job.candidate % config.per_color_pool;
    const AugSeed seed =
        config.seed.child({detail::kSimpleTag, static_cast<std::uint64_t>(job.cls), job.candidate});
    const augment::Level level = pool_level(j);
    const Image img = simple2d_candidate(job.cls, palette.combinations()[combo], level, config, seed);
    Record r;
    r.path = detail::record_path(job.cls, job.row);
    r.cls = job.cls;
    r.digits = digits_for_class(job.cls);
    r.source = "simple2d";
    r.policy = std::string(augment::level_name(level));
    r.seed = seed.value();
    r.extra["combination"] = combo;
    r.extra["candidate"] = job.candidate;
    save_png(img, out_dir / r.path);
    m.records[i] = std::move(r);
  });
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

/// Decodable PNGs of a directory in file-name order; undecodable files are
/// skipped.
inline std::vector<std::pair<std::string, Image>> load_backgrounds(const std::filesystem::path& dir,
                                                                   PngOptions png = {}) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (std::filesystem::is_directory(dir, ec)) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, Image>> out;
  for (const auto& f : files) {
    try {
      out.emplace_back(f.filename().string(), load_png(f, png));
    } catch (const Error&) {
    }
  }
  if (out.empty()) throw Error(Errc::EmptyBackgrounds, "no decodable PNG backgrounds in " + dir.string());
  return out;
}

/// Complex2D: number images pasted fully inside random backgrounds. Extra
/// record fields: "background", "number", "bbox" = [x, y, w, h] in
/// background pixels.
inline Manifest gen_complex2d(const Manifest& numbers, const std::filesystem::path& backgrounds_dir,
                              const GenConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const auto backgrounds = load_backgrounds(backgrounds_dir, config.png);
  const auto classes = detail::sorted_classes(config.classes);

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < numbers.records.size(); ++i) by_class[numbers.records[i].cls].push_back(i);
  for (int cls : classes) {
    if (!by_class.contains(cls)) throw Error(Errc::MissingClass, "numbers manifest has no class " + std::to_string(cls));
  }

  struct Job {
    int cls;
    std::size_t row;
    std::optional<std::size_t> number;  // index into numbers.records; empty for class 100
  };
  std::vector<Job> jobs;
  for (int cls : classes) {
    const auto& pool = by_class[cls];
    Rng rng = config.seed.child({detail::kComplexTag, static_cast<std::uint64_t>(cls)}).rng();
    std::vector<std::size_t> picks;
    if (pool.size() >= config.per_class_target) {
      picks = detail::sample_without_replacement(pool.size(), config.per_class_target, rng);
    } else {
      for (std::size_t k = 0; k < config.per_class_target; ++k) picks.push_back(rng.below(pool.size()));
    }
    for (std::size_t row = 0; row < picks.size(); ++row) jobs.push_back({cls, row, pool[picks[row]]});
    detail::ensure_dir(out_dir / std::to_string(cls));
  }
  if (config.include_no_number_class) {
    for (std::size_t row = 0; row < config.per_class_target; ++row) jobs.push_back({kUnrecognizable, row, std::nullopt});
    detail::ensure_dir(out_dir / std::to_string(kUnrecognizable));
  }

  Manifest m{out_dir, std::vector<Record>(jobs.size())};
  parallel_for(jobs.size(), config.jobs, [&](std::size_t i) {
    const Job& job = jobs[i];
    const AugSeed seed =
        config.seed.child({detail::kComplexTag, static_cast<std::uint64_t>(job.cls), 1000000 + job.row});
    Rng rng = seed.rng();
    const auto& [bg_name, bg] = backgrounds[rng.below(backgrounds.size())];
    const int short_side = std::min(bg.width(), bg.height());

    Record r;
    r.path = detail::record_path(job.cls, job.row);
    r.cls = job.cls;
    r.digits = digits_for_class(job.cls);
    r.source = "complex2d";
    r.seed = seed.value();
    r.extra["background"] = bg_name;

    Image composite;
    if (job.number) {
      const Record& src = numbers.records[*job.number];
      const Image number = load_png(numbers.resolve(src));
      const double fraction = rng.uniform(config.patch_lo, config.patch_hi);
      const int ph = std::max(1, static_cast<int>(std::lround(fraction * short_side)));
      const int pw = std::clamp(static_cast<int>(std::lround(static_cast<double>(ph) * number.width() / number.height())),
                                1, bg.width());
      const Image patch = resize_bilinear(number, pw, ph);
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(bg.width() - pw + 1)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(bg.height() - ph + 1)));
      composite = paste(bg, patch, x, y);
      r.policy = src.policy;
      r.extra["number"] = src.path;
      r.extra["bbox"] = {x, y, pw, ph};
      r.extra["background_size"] = {bg.width(), bg.height()};
    } else {
      const double fraction = rng.uniform(config.patch_lo, 1.0);
      const int side = std::max(1, static_cast<int>(std::lround(fraction * short_side)));
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(bg.width() - side + 1)));
      const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(bg.height() - side + 1)));
      composite = crop(bg, x, y, side, side);
      r.policy = "none";
      r.extra["bbox"] = {x, y, side, side};
      r.extra["background_size"] = {bg.width(), bg.height()};
    }
    save_png(resize_bilinear(composite, config.canvas, config.canvas), out_dir / r.path);
    m.records[i] = std::move(r);
  });
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace jersey::synth
