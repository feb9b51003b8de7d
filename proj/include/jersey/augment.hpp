#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "jersey/error.hpp"
#include "jersey/imaging.hpp"
#include "jersey/rng.hpp"

namespace jersey::augment {

enum class Level { Light, Medium, Hard };

inline std::string_view level_name(Level level) {
  switch (level) {
    case Level::Light: return "light";
    case Level::Medium: return "medium";
    case Level::Hard: return "hard";
  }
  return "light";
}

inline Level parse_level(std::string_view name) {
  if (name == "light") return Level::Light;
  if (name == "medium") return Level::Medium;
  if (name == "hard") return Level::Hard;
  throw Error(Errc::ConfigError, "unknown augmentation level '" + std::string(name) + "'");
}

/// Kernel magnitudes shared by all levels. Which kernels run is decided by
/// the level: Light = noise + optical, Medium = Light + grid,
/// Hard = Medium + channel shuffle + shift/scale/rotate.
struct Params {
  double noise_sigma = 10.0;
  double optical_k = 0.2;
  int grid_cells = 4;
  double grid_magnitude = 0.3;
  double shift_limit = 0.1;
  double scale_limit = 0.2;
  double rotate_limit = 15.0;
};

struct Policy {
  Level level = Level::Light;
  Params params;

  bool uses_grid() const { return level != Level::Light; }
  bool uses_shuffle() const { return level == Level::Hard; }
  bool uses_affine() const { return level == Level::Hard; }

  static Policy light(Params p = {}) { return {Level::Light, p}; }
  static Policy medium(Params p = {}) { return {Level::Medium, p}; }
  static Policy hard(Params p = {}) { return {Level::Hard, p}; }
};

// Kernel indices used for stream splitting inside apply_policy.
enum KernelIndex : std::uint64_t { kNoise = 0, kOptical = 1, kGrid = 2, kShuffle = 3, kAffine = 4 };

// ---------------------------------------------------------------------------
// Gaussian noise

inline Image gaussian_noise(const Image& img, double sigma, AugSeed seed) {
  if (sigma < 0.0) throw Error(Errc::InvalidArgument, "noise sigma must be >= 0");
  Image out = img;
  if (sigma == 0.0) return out;
  Rng rng = seed.rng();
  for (auto& v : out.pixels()) {
    v = round_clamp_u8(static_cast<float>(static_cast<double>(v) + sigma * rng.normal()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optical (radial) distortion about the image center:
//   r_src = r_dst * (1 + k * (r_dst / R)^2),  R = half-diagonal.

inline Image optical_distort_fixed(const Image& img, double k) {
  if (std::abs(k) > 0.5) throw Error(Errc::InvalidArgument, "optical coefficient must satisfy |k| <= 0.5");
  const float cx = static_cast<float>(img.width() - 1) * 0.5f;
  const float cy = static_cast<float>(img.height() - 1) * 0.5f;
  const float half_diag = 0.5f * std::hypot(static_cast<float>(img.width()), static_cast<float>(img.height()));
  const float inv_r2 = 1.0f / (half_diag * half_diag);
  const float kf = static_cast<float>(k);
  return remap(img, img.width(), img.height(), [&](int x, int y, float& sx, float& sy) {
    const float dx = static_cast<float>(x) - cx;
    const float dy = static_cast<float>(y) - cy;
    const float factor = 1.0f + kf * (dx * dx + dy * dy) * inv_r2;
    sx = cx + dx * factor;
    sy = cy + dy * factor;
  });
}

/// With `draw_from_range` the coefficient is drawn from U(-k, k).
inline Image optical_distort(const Image& img, double k, AugSeed seed, bool draw_from_range = false) {
  if (std::abs(k) > 0.5) throw Error(Errc::InvalidArgument, "optical coefficient must satisfy |k| <= 0.5");
  if (draw_from_range) {
    Rng rng = seed.rng();
    k = rng.uniform(-std::abs(k), std::abs(k));
  }
  return optical_distort_fixed(img, k);
}

// ---------------------------------------------------------------------------
// Grid distortion. Each axis is split into n cells; the source-side cell
// widths are scaled by per-cell factors and renormalized so the total extent
// (and both endpoints) stay fixed. Destination cells stay uniform.

namespace detail {

inline std::vector<float> grid_axis_map(int extent, const std::vector<double>& factors) {
  const int cells = static_cast<int>(factors.size());
  const float span = static_cast<float>(extent - 1);
  double total = 0.0;
  for (double f : factors) total += f;
  std::vector<float> src_bounds(static_cast<std::size_t>(cells) + 1);
  std::vector<float> dst_bounds(static_cast<std::size_t>(cells) + 1);
  double acc = 0.0;
  for (int i = 0; i <= cells; ++i) {
    src_bounds[static_cast<std::size_t>(i)] = static_cast<float>(static_cast<double>(span) * acc / total);
    dst_bounds[static_cast<std::size_t>(i)] = static_cast<float>(static_cast<double>(span) * i / cells);
    if (i < cells) acc += factors[static_cast<std::size_t>(i)];
  }
  src_bounds.back() = span;
  dst_bounds.back() = span;

  std::vector<float> map(static_cast<std::size_t>(extent));
  int cell = 0;
  for (int x = 0; x < extent; ++x) {
    const float fx = static_cast<float>(x);
    while (cell < cells - 1 && fx > dst_bounds[static_cast<std::size_t>(cell) + 1]) ++cell;
    const auto c = static_cast<std::size_t>(cell);
    const float dst_width = dst_bounds[c + 1] - dst_bounds[c];
    const float src_width = src_bounds[c + 1] - src_bounds[c];
    map[static_cast<std::size_t>(x)] =
        dst_width > 0.0f ? src_bounds[c] + (fx - dst_bounds[c]) * (src_width / dst_width) : src_bounds[c];
  }
  return map;
}

}  // namespace detail

inline Image grid_distort_with_factors(const Image& img, const std::vector<double>& x_factors,
                                       const std::vector<double>& y_factors) {
  if (x_factors.size() < 2 || y_factors.size() < 2) throw Error(Errc::InvalidArgument, "grid needs >= 2 cells");
  const auto map_x = detail::grid_axis_map(img.width(), x_factors);
  const auto map_y = detail::grid_axis_map(img.height(), y_factors);
  return remap(img, img.width(), img.height(), [&](int x, int y, float& sx, float& sy) {
    sx = map_x[static_cast<std::size_t>(x)];
    sy = map_y[static_cast<std::size_t>(y)];
  });
}

struct GridFactors {
  std::vector<double> x;
  std::vector<double> y;
};

inline GridFactors draw_grid_factors(int cells, double magnitude, AugSeed seed) {
  if (cells < 2) throw Error(Errc::InvalidArgument, "grid cells must be >= 2");
  if (magnitude < 0.0 || magnitude >= 1.0) throw Error(Errc::InvalidArgument, "grid magnitude must be in [0, 1)");
  Rng rng = seed.rng();
  GridFactors f;
  f.x.resize(static_cast<std::size_t>(cells));
  f.y.resize(static_cast<std::size_t>(cells));
  for (auto& v : f.x) v = rng.uniform(1.0 - magnitude, 1.0 + magnitude);
  for (auto& v : f.y) v = rng.uniform(1.0 - magnitude, 1.0 + magnitude);
  return f;
}

inline Image grid_distort(const Image& img, int cells, double magnitude, AugSeed seed) {
  const auto f = draw_grid_factors(cells, magnitude, seed);
  return grid_distort_with_factors(img, f.x, f.y);
}

// ---------------------------------------------------------------------------
// Channel shuffle. `perm[c]` names the input channel written to output c.

inline constexpr std::array<std::array<int, 3>, 6> kChannelPermutations = {{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
}};

inline Image permute_channels(const Image& img, const std::array<int, 3>& perm) {
  Image out = img;
  auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    dst[i] = src[i + static_cast<std::size_t>(perm[0])];
    dst[i + 1] = src[i + static_cast<std::size_t>(perm[1])];
    dst[i + 2] = src[i + static_cast<std::size_t>(perm[2])];
  }
  return out;
}

inline std::size_t draw_permutation(AugSeed seed) { return static_cast<std::size_t>(seed.rng().below(6)); }

inline Image channel_shuffle(const Image& img, AugSeed seed) {
  return permute_channels(img, kChannelPermutations[draw_permutation(seed)]);
}

// ---------------------------------------------------------------------------
// Shift / scale / rotate about the image center, inverse-mapped. Positive
// angles rotate counter-clockwise as displayed (y axis pointing down).

struct AffineParams {
  double shift_x = 0.0;  // pixels
  double shift_y = 0.0;  // pixels
  double scale = 1.0;
  double angle_deg = 0.0;
};

inline Image affine_warp(const Image& img, const AffineParams& p) {
  if (!(p.scale > 0.0)) throw Error(Errc::InvalidArgument, "affine scale must be positive");
  const float cx = static_cast<float>(img.width() - 1) * 0.5f;
  const float cy = static_cast<float>(img.height() - 1) * 0.5f;
  const double rad = p.angle_deg * std::numbers::pi / 180.0;
  const float cos_a = static_cast<float>(std::cos(rad));
  const float sin_a = static_cast<float>(std::sin(rad));
  const float inv_scale = static_cast<float>(1.0 / p.scale);
  const float tx = static_cast<float>(p.shift_x);
  const float ty = static_cast<float>(p.shift_y);
  return remap(img, img.width(), img.height(), [&](int x, int y, float& sx, float& sy) {
    const float dx = (static_cast<float>(x) - cx - tx) * inv_scale;
    const float dy = (static_cast<float>(y) - cy - ty) * inv_scale;
    sx = cx + cos_a * dx - sin_a * dy;
    sy = cy + sin_a * dx + cos_a * dy;
  });
}

inline AffineParams draw_affine(const Image& img, double shift_limit, double scale_limit, double rotate_limit,
                                AugSeed seed) {
  if (shift_limit < 0.0 || shift_limit > 0.5) throw Error(Errc::InvalidArgument, "shift limit must be in [0, 0.5]");
  if (scale_limit < 0.0 || scale_limit >= 1.0) throw Error(Errc::InvalidArgument, "scale limit must be in [0, 1)");
  if (rotate_limit < 0.0 || rotate_limit > 180.0) {
    throw Error(Errc::InvalidArgument, "rotate limit must be in [0, 180]");
  }
  Rng rng = seed.rng();
  AffineParams p;
  p.shift_x = rng.uniform(-shift_limit, shift_limit) * img.width();
  p.shift_y = rng.uniform(-shift_limit, shift_limit) * img.height();
  p.scale = rng.uniform(1.0 - scale_limit, 1.0 + scale_limit);
  p.angle_deg = rng.uniform(-rotate_limit, rotate_limit);
  return p;
}

inline Image shift_scale_rotate(const Image& img, double shift_limit, double scale_limit, double rotate_limit,
                                AugSeed seed) {
  return affine_warp(img, draw_affine(img, shift_limit, scale_limit, rotate_limit, seed));
}

// ---------------------------------------------------------------------------

/// Fixed order: noise -> optical -> grid -> channel shuffle -> affine. Each
/// kernel draws from its own substream of `seed`.
inline Image apply_policy(const Image& img, const Policy& policy, AugSeed seed) {
  const Params& p = policy.params;
  Image out = gaussian_noise(img, p.noise_sigma, seed.child(kNoise));
  out = optical_distort(out, p.optical_k, seed.child(kOptical), true);
  if (policy.uses_grid()) out = grid_distort(out, p.grid_cells, p.grid_magnitude, seed.child(kGrid));
  if (policy.uses_shuffle()) out = channel_shuffle(out, seed.child(kShuffle));
  if (policy.uses_affine()) {
    out = shift_scale_rotate(out, p.shift_limit, p.scale_limit, p.rotate_limit, seed.child(kAffine));
  }
  return out;
}

}  // namespace jersey::augment
