#pragma once

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "jersey/imaging.hpp"
#include "jersey/rng.hpp"

namespace jersey::testing {

namespace fs = std::filesystem;

/// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("jersey_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

/// Smooth image: sums of low-frequency sinusoids per channel. Interpolation
/// differences stay small on these, unlike white noise.
inline Image smooth_image(int w, int h, Rng& rng) {
  Image img(w, h);
  std::array<std::array<double, 4>, 3> coef{};
  for (auto& c : coef) {
    for (auto& v : c) v = rng.uniform(0.5, 3.0);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      Color c;
      std::uint8_t* ch[3] = {&c.r, &c.g, &c.b};
      for (int k = 0; k < 3; ++k) {
        const auto& a = coef[static_cast<std::size_t>(k)];
        const double s = 128 + 60 * std::sin(a[0] * 6.28 * u + a[1]) + 60 * std::cos(a[2] * 6.28 * v + a[3]);
        *ch[k] = static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
      }
      img.set_pixel(x, y, c);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Float64 reference sampler and remap, written independently of the library:
// pixel centers at integer coordinates, replicated edges.

inline std::array<double, 3> ref_sample(const Image& img, double x, double y) {
  const int w = img.width(), h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    auto at = [&](int xx, int yy) { return static_cast<double>(img.at(xx, yy, c)); };
    const double top = at(x0, y0) * (1 - fx) + at(x1, y0) * fx;
    const double bottom = at(x0, y1) * (1 - fx) + at(x1, y1) * fx;
    out[static_cast<std::size_t>(c)] = top * (1 - fy) + bottom * fy;
  }
  return out;
}

inline Image ref_remap(const Image& src, int w, int h, const std::function<std::array<double, 2>(double, double)>& map) {
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [sx, sy] = map(x, y);
      const auto v = ref_sample(src, sx, sy);
      for (int c = 0; c < 3; ++c) {
        const double r = std::round(v[static_cast<std::size_t>(c)]);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
      }
    }
  }
  return out;
}

inline int max_channel_diff(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) return 256;
  int worst = 0;
  for (std::size_t i = 0; i < a.pixels().size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<int>(a.pixels()[i]) - static_cast<int>(b.pixels()[i])));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Procedural backgrounds. Two families with different statistics so one can
// be used for training data and the other held out for a proxy test domain.

enum class BackgroundFamily { Stadium, Street };

inline Color random_color(Rng& rng) {
  return {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
          static_cast<std::uint8_t>(rng.below(256))};
}

inline Image procedural_background(BackgroundFamily family, AugSeed seed) {
  Rng rng = seed.rng();
  const int w = 96 + static_cast<int>(rng.below(80));
  const int h = 80 + static_cast<int>(rng.below(64));
  Image img(w, h);
  const Color a = random_color(rng), b = random_color(rng);
  if (family == BackgroundFamily::Stadium) {
    // Vertical gradient with blocky stands.
    for (int y = 0; y < h; ++y) {
      const double t = static_cast<double>(y) / (h - 1);
      const Color c{static_cast<std::uint8_t>(a.r + t * (b.r - a.r)), static_cast<std::uint8_t>(a.g + t * (b.g - a.g)),
                    static_cast<std::uint8_t>(a.b + t * (b.b - a.b))};
      for (int x = 0; x < w; ++x) img.set_pixel(x, y, c);
    }
    for (int k = 0; k < 6; ++k) {
      const Color c = random_color(rng);
      const int rw = 8 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w / 2)));
      const int rh = 6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(h / 3)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - rw + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - rh + 1)));
      for (int y = y0; y < y0 + rh; ++y) {
        for (int x = x0; x < x0 + rw; ++x) img.set_pixel(x, y, c);
      }
    }
  } else {
    // Diagonal stripes, discs and heavier grain.
    const double period = 6.0 + rng.uniform(0.0, 14.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool stripe = std::fmod((x + y) / period, 2.0) < 1.0;
        img.set_pixel(x, y, stripe ? a : b);
      }
    }
    for (int k = 0; k < 5; ++k) {
      const Color c = random_color(rng);
      const double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h), r = rng.uniform(5.0, h / 3.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r) img.set_pixel(x, y, c);
        }
      }
    }
  }
  const double grain = family == BackgroundFamily::Stadium ? 6.0 : 18.0;
  for (auto& v : img.pixels()) v = round_clamp_u8(static_cast<float>(v + rng.normal(0.0, grain)));
  return img;
}

inline void write_backgrounds(const fs::path& dir, BackgroundFamily family, int count, AugSeed seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "bg_%03d.png", i);
    save_png(procedural_background(family, seed.child(static_cast<std::uint64_t>(i))), dir / name);
  }
}

}  // namespace jersey::testing
