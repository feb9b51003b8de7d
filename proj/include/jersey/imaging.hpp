#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jersey/error.hpp"

namespace jersey {

struct Color {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend constexpr bool operator==(const Color&, const Color&) = default;
};

/// Owned 8-bit RGB raster, row-major, interleaved. A zero-sized image is
/// allowed and acts as the identity for concatenation.
class Image {
 public:
  Image() = default;

  Image(int width, int height, Color fill = {})
      : width_(checked_dim(width)), height_(checked_dim(height)),
        pixels_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  Image(int width, int height, std::vector<std::uint8_t> pixels)
      : width_(checked_dim(width)), height_(checked_dim(height)), pixels_(std::move(pixels)) {
    if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
      throw Error(Errc::InvalidArgument, "pixel buffer length does not equal width*height*3");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  std::span<const std::uint8_t> pixels() const { return pixels_; }
  std::span<std::uint8_t> pixels() { return pixels_; }

  std::uint8_t at(int x, int y, int c) const { return pixels_[index(x, y) + static_cast<std::size_t>(c)]; }
  std::uint8_t& at(int x, int y, int c) { return pixels_[index(x, y) + static_cast<std::size_t>(c)]; }

  const std::uint8_t* row(int y) const { return pixels_.data() + index(0, y); }
  std::uint8_t* row(int y) { return pixels_.data() + index(0, y); }

  Color pixel(int x, int y) const {
    const auto i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }

  void set_pixel(int x, int y, Color c) {
    const auto i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static int checked_dim(int v) {
    if (v < 0) throw Error(Errc::InvalidArgument, "negative image dimension");
    return v;
  }

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline std::uint8_t round_clamp_u8(float v) {
  const float r = std::round(v);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0f, 255.0f));
}

/// Bilinear sample at continuous pixel-center coordinates. Coordinates
/// outside the raster are clamped, which replicates the edge pixels.
inline void sample_bilinear(const Image& img, float x, float y, float out[3]) {
  const float max_x = static_cast<float>(img.width() - 1);
  const float max_y = static_cast<float>(img.height() - 1);
  x = std::clamp(x, 0.0f, max_x);
  y = std::clamp(y, 0.0f, max_y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const float fx = x - static_cast<float>(x0);
  const float fy = y - static_cast<float>(y0);
  for (int c = 0; c < 3; ++c) {
    const float top = static_cast<float>(img.at(x0, y0, c)) * (1.0f - fx) + static_cast<float>(img.at(x1, y0, c)) * fx;
    const float bottom = static_cast<float>(img.at(x0, y1, c)) * (1.0f - fx) + static_cast<float>(img.at(x1, y1, c)) * fx;
    out[c] = top * (1.0f - fy) + bottom * fy;
  }
}

/// Inverse-mapping remap: `map(x, y, sx, sy)` gives the source coordinate
/// for destination pixel (x, y).
template <typename MapFn>
Image remap(const Image& src, int width, int height, MapFn&& map) {
  Image dst(width, height);
  float sample[3];
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float sx = 0.0f;
      float sy = 0.0f;
      map(x, y, sx, sy);
      sample_bilinear(src, sx, sy, sample);
      for (int c = 0; c < 3; ++c) dst.at(x, y, c) = round_clamp_u8(sample[c]);
    }
  }
  return dst;
}

/// Half-pixel-center bilinear resize.
inline Image resize_bilinear(const Image& img, int width, int height) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "resize target must be at least 1x1");
  if (img.empty()) throw Error(Errc::InvalidArgument, "cannot resize an empty image");
  if (width == img.width() && height == img.height()) return img;
  const float scale_x = static_cast<float>(img.width()) / static_cast<float>(width);
  const float scale_y = static_cast<float>(img.height()) / static_cast<float>(height);
  return remap(img, width, height, [&](int x, int y, float& sx, float& sy) {
    sx = (static_cast<float>(x) + 0.5f) * scale_x - 0.5f;
    sy = (static_cast<float>(y) + 0.5f) * scale_y - 0.5f;
  });
}

/// Opaque overwrite of the rectangle at (x, y).
inline Image paste(Image dst, const Image& src, int x, int y) {
  if (x < 0 || y < 0 || x + src.width() > dst.width() || y + src.height() > dst.height()) {
    throw Error(Errc::OutOfBounds, "paste of " + std::to_string(src.width()) + "x" + std::to_string(src.height()) +
                                       " at (" + std::to_string(x) + "," + std::to_string(y) + ") exceeds " +
                                       std::to_string(dst.width()) + "x" + std::to_string(dst.height()));
  }
  const auto row_bytes = static_cast<std::size_t>(src.width()) * 3;
  for (int row = 0; row < src.height(); ++row) {
    if (row_bytes == 0) break;
    std::memcpy(dst.row(y + row) + static_cast<std::size_t>(x) * 3, src.row(row), row_bytes);
  }
  return dst;
}

inline Image concat_horizontal(const Image& left, const Image& right) {
  if (left.width() == 0) return right;
  if (right.width() == 0) return left;
  if (left.height() != right.height()) {
    throw Error(Errc::HeightMismatch,
                "heights " + std::to_string(left.height()) + " vs " + std::to_string(right.height()));
  }
  Image out(left.width() + right.width(), left.height());
  out = paste(std::move(out), left, 0, 0);
  return paste(std::move(out), right, left.width(), 0);
}

inline Image crop(const Image& img, int x, int y, int width, int height) {
  if (x < 0 || y < 0 || width < 0 || height < 0 || x + width > img.width() || y + height > img.height()) {
    throw Error(Errc::OutOfBounds, "crop rectangle outside image");
  }
  Image out(width, height);
  const auto row_bytes = static_cast<std::size_t>(width) * 3;
  for (int row = 0; row < height && row_bytes > 0; ++row) {
    std::memcpy(out.row(row), img.row(y + row) + static_cast<std::size_t>(x) * 3, row_bytes);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG I/O (libpng). Error handling uses libpng's setjmp protocol, so every
// C++ object that must survive a longjmp lives in the caller's frame.

struct PngOptions {
  /// Accept 16-bit PNGs by scaling to 8 bits (round(v * 255 / 65535)).
  bool allow_16bit = false;
};

namespace detail {

struct PngErrorSink {
  char message[256] = {};
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png));
  if (sink != nullptr) std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};

struct PngReadHandles {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadHandles() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriteHandles {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteHandles() { png_destroy_write_struct(&png, &info); }
};

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int channels = 0;
};

inline bool png_read_header(PngReadHandles& h, std::FILE* fp, bool allow_16bit, PngHeader& header, bool& too_deep) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_init_io(h.png, fp);
  png_read_info(h.png, h.info);
  header.width = png_get_image_width(h.png, h.info);
  header.height = png_get_image_height(h.png, h.info);
  header.bit_depth = png_get_bit_depth(h.png, h.info);
  const int color_type = png_get_color_type(h.png, h.info);
  if (header.bit_depth == 16 && !allow_16bit) {
    too_deep = true;
    return true;
  }
  if (header.bit_depth == 16) png_set_scale_16(h.png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(h.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && header.bit_depth < 8) png_set_expand_gray_1_2_4_to_8(h.png);
  if (png_get_valid(h.png, h.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(h.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(h.png);
  png_set_interlace_handling(h.png);
  png_read_update_info(h.png, h.info);
  header.channels = png_get_channels(h.png, h.info);
  return true;
}

inline bool png_read_rows(PngReadHandles& h, png_bytep* rows) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_read_image(h.png, rows);
  png_read_end(h.png, nullptr);
  return true;
}

inline bool png_write_all(PngWriteHandles& h, std::FILE* fp, const Image& img, png_bytep* rows) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_init_io(h.png, fp);
  png_set_IHDR(h.png, h.info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(h.png, h.info);
  png_write_image(h.png, rows);
  png_write_end(h.png, nullptr);
  return true;
}

}  // namespace detail

/// Decodes an 8-bit PNG to RGB. Grayscale is replicated across channels and
/// alpha is composited over black.
inline Image load_png(const std::filesystem::path& path, PngOptions options = {}) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw Error(Errc::FileNotFound, path.string());
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error(Errc::FileNotFound, path.string());

  unsigned char signature[8] = {};
  if (std::fread(signature, 1, 8, fp.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(Errc::DecodeError, path.string() + ": not a PNG file");
  }

  detail::PngErrorSink sink;
  detail::PngReadHandles h;
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, detail::png_error_fn, detail::png_warning_fn);
  if (h.png == nullptr) throw Error(Errc::DecodeError, "png_create_read_struct failed");
  h.info = png_create_info_struct(h.png);
  if (h.info == nullptr) throw Error(Errc::DecodeError, "png_create_info_struct failed");
  png_set_sig_bytes(h.png, 8);

  detail::PngHeader header;
  bool too_deep = false;
  if (!detail::png_read_header(h, fp.get(), options.allow_16bit, header, too_deep)) {
    throw Error(Errc::DecodeError, path.string() + ": " + sink.message);
  }
  if (too_deep) throw Error(Errc::DecodeError, path.string() + ": 16-bit PNG (enable allow_16bit to downconvert)");
  if (header.channels != 3 && header.channels != 4) {
    throw Error(Errc::DecodeError, path.string() + ": unsupported channel layout");
  }

  const auto w = static_cast<std::size_t>(header.width);
  const auto hgt = static_cast<std::size_t>(header.height);
  const auto stride = w * static_cast<std::size_t>(header.channels);
  std::vector<std::uint8_t> raw(stride * hgt);
  std::vector<png_bytep> rows(hgt);
  for (std::size_t r = 0; r < hgt; ++r) rows[r] = raw.data() + r * stride;
  if (!detail::png_read_rows(h, rows.data())) throw Error(Errc::DecodeError, path.string() + ": " + sink.message);

  if (header.channels == 3) {
    return Image(static_cast<int>(w), static_cast<int>(hgt), std::move(raw));
  }
  std::vector<std::uint8_t> rgb(w * hgt * 3);
  for (std::size_t i = 0; i < w * hgt; ++i) {
    const unsigned alpha = raw[i * 4 + 3];
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[i * 3 + c] = static_cast<std::uint8_t>((raw[i * 4 + c] * alpha + 127U) / 255U);
    }
  }
  return Image(static_cast<int>(w), static_cast<int>(hgt), std::move(rgb));
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
  if (img.empty()) throw Error(Errc::IoError, "cannot encode an empty image");
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");

  detail::PngErrorSink sink;
  detail::PngWriteHandles h;
  h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, detail::png_error_fn, detail::png_warning_fn);
  if (h.png == nullptr) throw Error(Errc::IoError, "png_create_write_struct failed");
  h.info = png_create_info_struct(h.png);
  if (h.info == nullptr) throw Error(Errc::IoError, "png_create_info_struct failed");

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  auto* base = const_cast<std::uint8_t*>(img.pixels().data());
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = base + r * static_cast<std::size_t>(img.width()) * 3;
  if (!detail::png_write_all(h, fp.get(), img, rows.data())) {
    throw Error(Errc::IoError, path.string() + ": " + sink.message);
  }
  if (std::fflush(fp.get()) != 0) throw Error(Errc::IoError, "flush failed for " + path.string());
}

}  // namespace jersey
