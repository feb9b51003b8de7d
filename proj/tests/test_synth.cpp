#include <map>
#include <set>

#include <gtest/gtest.h>

#include "jersey/synth.hpp"
#include "support/support.hpp"

namespace {

using namespace jersey;
using namespace jersey::synth;
using jersey::testing::TempDir;

const Color kNavy{0, 34, 68};
const Color kWhite{255, 255, 255};

GenConfig desk_config(std::vector<int> classes, std::size_t per_class, std::uint64_t seed) {
  GenConfig c;
  c.classes = std::move(classes);
  c.per_class_target = per_class;
  c.per_color_pool = 40;
  c.canvas = 32;
  c.seed = AugSeed(seed);
  return c;
}

TEST(RenderDigit, EightCoversAPlausibleArea) {
  const GlyphSpec spec(8, kNavy, kWhite, 0.8, 0.8);
  const Image img = render_digit(spec, AugSeed(1));
  ASSERT_EQ(img.width(), 100);
  std::size_t fg = 0;
  for (int y = 0; y < 100; ++y) {
    for (int x = 0; x < 100; ++x) fg += img.pixel(x, y) == kNavy;
  }
  EXPECT_GT(fg, 500u);
  EXPECT_LT(fg, 6000u);
}

TEST(RenderDigit, DeterministicAndValidated) {
  const GlyphSpec spec(3, kWhite, kNavy, 0.5, 0.9);
  EXPECT_EQ(render_digit(spec, AugSeed(7)), render_digit(spec, AugSeed(7)));
  EXPECT_NE(render_digit(spec, AugSeed(7)), render_digit(spec, AugSeed(8)));
  EXPECT_THROW(GlyphSpec(3, kWhite, kWhite, 0.5, 0.9), Error);
  EXPECT_THROW(GlyphSpec(10, kWhite, kNavy, 0.5, 0.9), Error);
  EXPECT_THROW(GlyphSpec(1, kWhite, kNavy, 0.9, 0.5), Error);
}

TEST(RenderDigit, DigitsAreDistinct) {
  std::set<std::vector<std::uint8_t>> seen;
  for (int d = 0; d < 10; ++d) {
    const Image img = render_digit(GlyphSpec(d, kWhite, kNavy, 0.7, 0.7), AugSeed(3), 40);
    seen.insert({img.pixels().begin(), img.pixels().end()});
  }
  EXPECT_EQ(seen.size(), 10u);
}

TEST(GlyphSheet, LoadsAndRejects) {
  TempDir dir("font");
  Image sheet(100, 20);
  for (int d = 0; d < 10; ++d) {
    for (int y = 2; y < 18; ++y) {
      for (int x = d * 10 + 2; x < d * 10 + 3 + d % 6; ++x) sheet.set_pixel(x, y, kWhite);
    }
  }
  save_png(sheet, dir / "sheet.png");
  const FontSource font = FontSource::from_file(dir / "sheet.png");
  const Image img = render_digit(GlyphSpec(5, kNavy, kWhite, 0.6, 0.6, font), AugSeed(1), 50);
  EXPECT_EQ(img.width(), 50);

  save_png(Image(100, 20), dir / "blank.png");
  try {
    FontSource::from_file(dir / "blank.png");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::FontLoadError);
  }
  EXPECT_THROW(FontSource::from_file(dir / "missing.png"), Error);
}

TEST(Palette, RejectsIndistinctPairs) {
  EXPECT_EQ(default_palette().size(), 5u);
  EXPECT_THROW(Palette({}), Error);
  EXPECT_THROW(Palette({{Color{10, 10, 10}, Color{20, 20, 20}}}), Error);
}

TEST(PoolLevel, ElevenCycle) {
  std::map<augment::Level, int> n;
  for (std::size_t j = 0; j < 11; ++j) ++n[pool_level(j)];
  EXPECT_EQ(n[augment::Level::Light], 1);
  EXPECT_EQ(n[augment::Level::Medium], 5);
  EXPECT_EQ(n[augment::Level::Hard], 5);
}

TEST(Simple2D, CountsLabelsAndDeterminism) {
  TempDir a("s2d"), b("s2d");
  const GenConfig c = desk_config({7, 42, 99}, 12, 5);
  const Manifest m = gen_simple2d(c, default_palette(), a.path());
  ASSERT_EQ(m.records.size(), 36u);
  for (const auto& [cls, n] : m.class_counts()) EXPECT_EQ(n, 12u) << cls;
  for (const auto& r : m.records) {
    EXPECT_EQ(r.source, "simple2d");
    EXPECT_EQ(r.digits, digits_for_class(r.cls));
    const Image img = load_png(m.resolve(r));
    EXPECT_EQ(img.width(), 32);
    EXPECT_EQ(img.height(), 32);
  }
  gen_simple2d(c, default_palette(), b.path());
  EXPECT_EQ(jersey::testing::read_bytes(a / "manifest.jsonl"), jersey::testing::read_bytes(b / "manifest.jsonl"));
  for (const auto& r : m.records) {
    EXPECT_EQ(jersey::testing::read_bytes(a / r.path), jersey::testing::read_bytes(b / r.path)) << r.path;
  }
}

TEST(Simple2D, ParallelMatchesSerial) {
  TempDir a("s2d"), b("s2d");
  GenConfig c = desk_config({3, 18}, 8, 9);
  gen_simple2d(c, default_palette(), a.path());
  c.jobs = 3;
  gen_simple2d(c, default_palette(), b.path());
  EXPECT_EQ(jersey::testing::read_bytes(a / "manifest.jsonl"), jersey::testing::read_bytes(b / "manifest.jsonl"));
  EXPECT_EQ(jersey::testing::read_bytes(a / "18/3.png"), jersey::testing::read_bytes(b / "18/3.png"));
}

TEST(Simple2D, RejectsImpossibleTargets) {
  TempDir a("s2d");
  GenConfig c = desk_config({1}, 1000, 1);
  c.per_color_pool = 10;
  EXPECT_THROW(gen_simple2d(c, default_palette(), a.path()), Error);
  c = desk_config({150}, 2, 1);
  EXPECT_THROW(gen_simple2d(c, default_palette(), a.path()), Error);
}

TEST(Simple2D, CandidateTwoDigitLayout) {
  const GenConfig c = desk_config({}, 1, 1);
  augment::Params none;
  none.noise_sigma = 0;
  none.optical_k = 0;
  GenConfig plain = c;
  plain.aug = none;
  const Image img = simple2d_candidate(47, {kWhite, kNavy}, augment::Level::Light, plain, AugSeed(4));
  EXPECT_EQ(img.width(), 32);
  // Left and right halves carry different digits.
  EXPECT_NE(crop(img, 0, 0, 16, 32), crop(img, 16, 0, 16, 32));
}

TEST(Complex2D, PatchInsideBackgroundAndCounts) {
  TempDir nums("c2d"), bgs("c2d"), out("c2d");
  const Manifest numbers = gen_simple2d(desk_config({5, 61}, 4, 2), default_palette(), nums.path());
  jersey::testing::write_backgrounds(bgs.path(), jersey::testing::BackgroundFamily::Stadium, 3, AugSeed(8));
  GenConfig c = desk_config({5, 61}, 6, 3);
  const Manifest m = gen_complex2d(numbers, bgs.path(), c, out.path());
  const auto counts = m.class_counts();
  EXPECT_EQ(counts.at(5), 6u);
  EXPECT_EQ(counts.at(61), 6u);
  EXPECT_EQ(counts.at(100), 6u);
  for (const auto& r : m.records) {
    EXPECT_EQ(r.source, "complex2d");
    const auto bbox = r.extra.at("bbox");
    const auto size = r.extra.at("background_size");
    EXPECT_GE(bbox[0].get<int>(), 0);
    EXPECT_GE(bbox[1].get<int>(), 0);
    EXPECT_LE(bbox[0].get<int>() + bbox[2].get<int>(), size[0].get<int>());
    EXPECT_LE(bbox[1].get<int>() + bbox[3].get<int>(), size[1].get<int>());
  }
}

TEST(Complex2D, PatchPixelsAppearInComposite) {
  TempDir nums("c2d"), bgs("c2d"), out("c2d");
  std::filesystem::create_directories(nums / "7");
  const Image number(20, 20, Color{200, 10, 10});
  save_png(number, nums / "7/0.png");
  Manifest numbers{nums.path(), {}};
  Record r;
  r.path = "7/0.png";
  r.cls = 7;
  r.digits = digits_for_class(7);
  numbers.records.push_back(r);
  save_png(Image(100, 100, kWhite), bgs / "white.png");

  GenConfig c;
  c.classes = {7};
  c.per_class_target = 3;
  c.canvas = 100;
  c.include_no_number_class = false;
  c.seed = AugSeed(1);
  // Keep the composite at background resolution so the patch is exact.
  const Manifest m = gen_complex2d(numbers, bgs.path(), c, out.path());
  ASSERT_EQ(m.records.size(), 3u);
  for (const auto& rec : m.records) {
    const Image img = load_png(m.resolve(rec));
    const auto bbox = rec.extra.at("bbox");
    const int x = bbox[0], y = bbox[1], w = bbox[2], h = bbox[3];
    // Template match: the full patch rectangle is the number color, the
    // pixel just outside (where one exists) is background.
    int hits = 0;
    for (int yy = 0; yy < img.height(); ++yy) {
      for (int xx = 0; xx < img.width(); ++xx) hits += img.pixel(xx, yy) == Color{200, 10, 10};
    }
    EXPECT_EQ(hits, w * h);
    EXPECT_EQ(img.pixel(x, y), (Color{200, 10, 10}));
    EXPECT_EQ(img.pixel(x + w - 1, y + h - 1), (Color{200, 10, 10}));
  }
}

TEST(Complex2D, BackgroundAndClassErrors) {
  TempDir nums("c2d"), bgs("c2d"), out("c2d");
  const Manifest numbers = gen_simple2d(desk_config({5}, 2, 2), default_palette(), nums.path());
  {
    std::ofstream os(bgs / "broken.png");
    os << "nope";
  }
  try {
    gen_complex2d(numbers, bgs.path(), desk_config({5}, 2, 1), out.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyBackgrounds);
  }
  save_png(Image(50, 40, kWhite), bgs / "ok.png");
  try {
    gen_complex2d(numbers, bgs.path(), desk_config({5, 6}, 2, 1), out.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingClass);
  }
}

}  // namespace
