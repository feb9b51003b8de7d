#include <png.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include <gtest/gtest.h>

#include "jersey/imaging.hpp"
#include "support/raw_png.hpp"
#include "support/support.hpp"

namespace {

using namespace jersey;
using jersey::testing::TempDir;
using jersey::testing::write_raw_png;

TEST(Image, ConstructionAndAccess) {
  Image img(3, 2, Color{1, 2, 3});
  EXPECT_EQ(img.width(), 3);
  EXPECT_EQ(img.height(), 2);
  EXPECT_EQ(img.pixel(2, 1), (Color{1, 2, 3}));
  img.set_pixel(0, 0, Color{9, 8, 7});
  EXPECT_EQ(img.at(0, 0, 2), 7);
  EXPECT_THROW(Image(-1, 2), Error);
  EXPECT_THROW(Image(2, 2, std::vector<std::uint8_t>(5)), Error);
  EXPECT_TRUE(Image(0, 5).empty());
}

TEST(Png, DecodesSingleWhitePixel) {
  TempDir dir("png");
  save_png(Image(1, 1, Color{255, 255, 255}), dir / "w.png");
  const Image img = load_png(dir / "w.png");
  EXPECT_EQ(img, Image(1, 1, Color{255, 255, 255}));
}

TEST(Png, BlackImageWritesAndRoundTrips) {
  TempDir dir("png");
  save_png(Image(2, 2), dir / "b.png");
  EXPECT_TRUE(std::filesystem::exists(dir / "b.png"));
  EXPECT_EQ(load_png(dir / "b.png"), Image(2, 2));
}

TEST(Png, RandomImageRoundTrip) {
  TempDir dir("png");
  Rng rng(5);
  const Image img = jersey::testing::random_image(100, 100, rng);
  save_png(img, dir / "r.png");
  const Image back = load_png(dir / "r.png");
  EXPECT_EQ(back, img);
  save_png(back, dir / "r2.png");
  EXPECT_EQ(load_png(dir / "r2.png"), img);
}

TEST(Png, ErrorsAreTyped) {
  TempDir dir("png");
  try {
    load_png(dir / "missing.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FileNotFound);
  }
  {
    std::ofstream os(dir / "junk.png");
    os << "definitely not a png";
  }
  try {
    load_png(dir / "junk.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecodeError);
  }
  // Truncated file: valid signature, cut-off body.
  save_png(Image(8, 8, Color{1, 2, 3}), dir / "full.png");
  const std::string bytes = jersey::testing::read_bytes(dir / "full.png");
  {
    std::ofstream os(dir / "cut.png", std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
  }
  try {
    load_png(dir / "cut.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecodeError);
  }
}

TEST(Png, UnwritableDestinationIsIoError) {
  TempDir dir("png");
  {
    std::ofstream os(dir / "file");
    os << "x";
  }
  try {
    save_png(Image(1, 1), dir / "file" / "under.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoError);
  }
}

TEST(Png, SixteenBitRejectedUnlessAllowed) {
  TempDir dir("png");
  const int w = 257, h = 3;
  std::vector<std::uint16_t> values;
  std::vector<std::uint8_t> bytes;
  for (int i = 0; i < w * h * 3; ++i) {
    const auto v = static_cast<std::uint16_t>((i * 97) % 65536);
    values.push_back(v);
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  write_raw_png(dir / "deep.png", w, h, 16, PNG_COLOR_TYPE_RGB, bytes);
  try {
    load_png(dir / "deep.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecodeError);
  }
  const Image img = load_png(dir / "deep.png", PngOptions{true});
  ASSERT_EQ(img.width(), w);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const long expected = std::lround(values[i] * 255.0 / 65535.0);
    ASSERT_EQ(img.pixels()[i], expected) << "value " << values[i];
  }
}

TEST(Png, GrayAndAlphaLayouts) {
  TempDir dir("png");
  write_raw_png(dir / "gray.png", 2, 1, 8, PNG_COLOR_TYPE_GRAY, {10, 200});
  const Image gray = load_png(dir / "gray.png");
  EXPECT_EQ(gray.pixel(0, 0), (Color{10, 10, 10}));
  EXPECT_EQ(gray.pixel(1, 0), (Color{200, 200, 200}));

  write_raw_png(dir / "rgba.png", 2, 1, 8, PNG_COLOR_TYPE_RGB_ALPHA, {200, 100, 50, 255, 200, 100, 50, 0});
  const Image rgba = load_png(dir / "rgba.png");
  EXPECT_EQ(rgba.pixel(0, 0), (Color{200, 100, 50}));
  EXPECT_EQ(rgba.pixel(1, 0), (Color{0, 0, 0}));
}

TEST(Resize, SameDimensionsIsIdentity) {
  Rng rng(1);
  const Image img = jersey::testing::random_image(13, 7, rng);
  EXPECT_EQ(resize_bilinear(img, 13, 7), img);
}

TEST(Resize, UpscaledRampIsMonotone) {
  Image img(2, 1);
  img.set_pixel(1, 0, Color{255, 255, 255});
  const Image up = resize_bilinear(img, 4, 1);
  for (int x = 1; x < 4; ++x) EXPECT_GE(up.at(x, 0, 0), up.at(x - 1, 0, 0));
  EXPECT_EQ(up.at(0, 0, 0), 0);
  EXPECT_EQ(up.at(3, 0, 0), 255);
}

Image ref_resize(const Image& img, int w, int h) {
  const double sx = static_cast<double>(img.width()) / w, sy = static_cast<double>(img.height()) / h;
  return jersey::testing::ref_remap(img, w, h, [&](double x, double y) {
    return std::array<double, 2>{(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5};
  });
}

TEST(Resize, CheckerboardHalvesToMidGray) {
  Image board(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      if ((x + y) % 2) board.set_pixel(x, y, Color{255, 255, 255});
    }
  }
  const Image half = resize_bilinear(board, 2, 2);
  EXPECT_EQ(half, ref_resize(board, 2, 2));
  for (auto v : half.pixels()) EXPECT_TRUE(v == 127 || v == 128) << int(v);
}

TEST(Resize, MatchesFloat64Oracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
    const int tw = 1 + static_cast<int>(rng.below(64)), th = 1 + static_cast<int>(rng.below(64));
    const Image img = jersey::testing::random_image(w, h, rng);
    EXPECT_LE(jersey::testing::max_channel_diff(resize_bilinear(img, tw, th), ref_resize(img, tw, th)), 1);
  }
  EXPECT_THROW(resize_bilinear(Image(2, 2), 0, 3), Error);
}

TEST(Paste, SinglePixel) {
  const Image out = paste(Image(2, 2), Image(1, 1, Color{255, 0, 0}), 0, 0);
  EXPECT_EQ(out.pixel(0, 0), (Color{255, 0, 0}));
  EXPECT_EQ(out.pixel(1, 0), (Color{0, 0, 0}));
  EXPECT_EQ(out.pixel(0, 1), (Color{0, 0, 0}));
  EXPECT_EQ(out.pixel(1, 1), (Color{0, 0, 0}));
}

TEST(Paste, FullSizeIsIdentityAndBoundsChecked) {
  Rng rng(3);
  const Image src = jersey::testing::random_image(5, 4, rng);
  EXPECT_EQ(paste(Image(5, 4), src, 0, 0), src);
  try {
    paste(Image(10, 10), Image(3, 3), 8, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::OutOfBounds);
  }
  EXPECT_THROW(paste(Image(10, 10), Image(3, 3), -1, 0), Error);
}

TEST(Concat, TwoHalvesMakeSquare) {
  const Image left(50, 100, Color{1, 1, 1}), right(50, 100, Color{2, 2, 2});
  const Image both = concat_horizontal(left, right);
  EXPECT_EQ(both.width(), 100);
  EXPECT_EQ(both.height(), 100);
  EXPECT_EQ(both.pixel(49, 10), (Color{1, 1, 1}));
  EXPECT_EQ(both.pixel(50, 10), (Color{2, 2, 2}));
}

TEST(Concat, EmptyIsIdentityAndHeightsMustMatch) {
  Rng rng(4);
  const Image img = jersey::testing::random_image(6, 9, rng);
  EXPECT_EQ(concat_horizontal(img, Image(0, 9)), img);
  EXPECT_EQ(concat_horizontal(Image(), img), img);
  try {
    concat_horizontal(Image(5, 99), Image(5, 100));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::HeightMismatch);
  }
}

TEST(Crop, ExtractsRectangle) {
  Rng rng(6);
  const Image img = jersey::testing::random_image(10, 8, rng);
  const Image part = crop(img, 2, 3, 4, 5);
  ASSERT_EQ(part.width(), 4);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(part.pixel(x, y), img.pixel(x + 2, y + 3));
  }
  EXPECT_THROW(crop(img, 8, 0, 3, 1), Error);
}

}  // namespace
