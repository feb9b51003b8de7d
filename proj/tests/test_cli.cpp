#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "jersey/cli.hpp"
#include "support/raw_png.hpp"
#include "support/support.hpp"

namespace {

using namespace jersey;
using jersey::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

fs::path write_config(const fs::path& path, const json& doc) {
  std::ofstream os(path);
  os << doc.dump(2);
  return path;
}

Outcome invoke(const std::string& command, const fs::path& config, const cli::Overrides& flags = {}) {
  std::ostringstream out, err;
  const int code = cli::run(command, config, flags, out, err);
  return {code, out.str(), err.str()};
}

/// Runs the built jerseyctl binary and returns its exit status.
int run_binary(const std::string& args) {
  const std::string cmd = std::string(JERSEYCTL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json simple_config(const fs::path& out) {
  return {{"seed", 11},
          {"out", out.string()},
          {"generator", {{"classes", {3, 7}}, {"per_class_target", 6}, {"per_color_pool", 3}, {"canvas", 16}}}};
}

TEST(CliGenerate, DeterministicAcrossRuns) {
  TempDir dir("cli");
  const auto cfg = write_config(dir / "gen.json", simple_config(dir / "a"));
  const auto r = invoke("gen-simple2d", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "a" / "manifest.jsonl"));
  EXPECT_EQ(r.out, "3\t6\n7\t6\n");
  cli::Overrides flags;
  flags.out = dir / "b";
  ASSERT_EQ(invoke("gen-simple2d", cfg, flags).code, 0);
  EXPECT_EQ(jersey::testing::read_bytes(dir / "a" / "manifest.jsonl"),
            jersey::testing::read_bytes(dir / "b" / "manifest.jsonl"));
}

TEST(CliGenerate, FlagsOverrideFile) {
  TempDir dir("cli");
  json doc = simple_config(dir / "a");
  const auto cfg = write_config(dir / "gen.json", doc);
  doc["seed"] = 12;
  doc["out"] = (dir / "b").string();
  const auto cfg12 = write_config(dir / "gen12.json", doc);
  cli::Overrides flags;
  flags.seed = 12;
  ASSERT_EQ(invoke("gen-simple2d", cfg, flags).code, 0);
  ASSERT_EQ(invoke("gen-simple2d", cfg12).code, 0);
  EXPECT_EQ(jersey::testing::read_bytes(dir / "a" / "manifest.jsonl"),
            jersey::testing::read_bytes(dir / "b" / "manifest.jsonl"));

  const auto c = cli::load_config(cfg, {.threshold = 0.8});
  EXPECT_EQ(c.threshold, 0.8);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.gen.per_class_target, 6u);
}

TEST(CliGenerate, DryRunWritesNothing) {
  TempDir dir("cli");
  const auto cfg = write_config(dir / "gen.json", simple_config(dir / "out"));
  const auto r = invoke("gen-simple2d", cfg, {.dry_run = true});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "3\t6\n7\t6\n");
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(CliGenerate, ConfigErrorsExitOne) {
  TempDir dir("cli");
  json doc = simple_config(dir / "out");
  doc.erase("seed");
  EXPECT_EQ(invoke("gen-simple2d", write_config(dir / "noseed.json", doc)).code, 1);
  EXPECT_EQ(invoke("gen-simple2d", write_config(dir / "noseed2.json", doc), {.seed = 4, .dry_run = true}).code, 0);
  {
    std::ofstream os(dir / "broken.json");
    os << "{\"seed\": ";
  }
  EXPECT_EQ(invoke("gen-simple2d", dir / "broken.json").code, 1);
  EXPECT_EQ(invoke("gen-simple2d", dir / "absent.json").code, 1);
  doc = simple_config(dir / "out");
  doc["generator"]["per_class_target"] = 100;  // exceeds 3 x 5 combinations
  EXPECT_EQ(invoke("gen-simple2d", write_config(dir / "big.json", doc)).code, 1);
  doc = simple_config(dir / "out");
  EXPECT_EQ(invoke("bogus", write_config(dir / "ok.json", doc)).code, 1);
  EXPECT_EQ(invoke("gen-simple2d", dir / "ok.json", {.threshold = 1.5}).code, 1);
}

TEST(CliGenerate, UnwritableOutputExitsTwo) {
  TempDir dir("cli");
  { std::ofstream os(dir / "plain_file"); }
  const auto cfg = write_config(dir / "gen.json", simple_config(dir / "plain_file" / "out"));
  const auto r = invoke("gen-simple2d", cfg);
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliGenerate, Complex2d) {
  TempDir dir("cli");
  ASSERT_EQ(invoke("gen-simple2d", write_config(dir / "gen.json", simple_config(dir / "simple"))).code, 0);
  jersey::testing::write_backgrounds(dir / "bg", jersey::testing::BackgroundFamily::Stadium, 3, AugSeed(1));
  fs::create_directories(dir / "empty");

  json doc = simple_config(dir / "complex");
  doc["generator"]["numbers"] = "simple/manifest.jsonl";  // relative to the config file
  doc["generator"]["backgrounds"] = "bg";
  const auto cfg = write_config(dir / "complex.json", doc);
  const auto r = invoke("gen-complex2d", cfg);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "3\t6\n7\t6\n100\t6\n");
  ASSERT_EQ(invoke("gen-complex2d", cfg, {.out = dir / "again"}).code, 0);
  EXPECT_EQ(jersey::testing::read_bytes(dir / "complex" / "manifest.jsonl"),
            jersey::testing::read_bytes(dir / "again" / "manifest.jsonl"));

  doc["generator"]["backgrounds"] = "empty";
  const auto empty = invoke("gen-complex2d", write_config(dir / "empty.json", doc));
  EXPECT_EQ(empty.code, 2);
  EXPECT_NE(empty.err.find("background"), std::string::npos);
  doc["generator"]["backgrounds"] = "missing";
  EXPECT_EQ(invoke("gen-complex2d", write_config(dir / "missing.json", doc)).code, 1);
}

std::string kp(const std::string& image, bool valid = true) {
  json j = {{"image", image},
            {"keypoints",
             {{"left_shoulder", {4, 4, 0.9}}, {"right_shoulder", {20, 4, 0.9}}, {"left_hip", {4, 24, 0.9}},
              {"right_hip", {20, 24, 0.9}}}}};
  if (!valid) j["keypoints"].erase("left_hip");
  return j.dump();
}

TEST(CliCrop, ValidMalformedAndAllMalformed) {
  TempDir dir("cli");
  fs::create_directories(dir / "img");
  for (const char* name : {"p1.png", "p2.png", "p3.png"}) save_png(Image(32, 32, Color{9, 9, 9}), dir / "img" / name);
  auto write_kp = [&](const std::string& name, const std::vector<std::string>& lines) {
    std::ofstream os(dir / name);
    for (const auto& l : lines) os << l << "\n";
  };
  write_kp("good.jsonl", {kp("p1.png"), kp("p2.png"), kp("p3.png")});
  write_kp("mixed.jsonl", {kp("p1.png"), kp("p2.png", false), "not json"});
  write_kp("bad.jsonl", {kp("p1.png", false), "{}"});

  auto config = [&](const std::string& kp_file, const std::string& out) {
    return write_config(dir / (out + ".json"),
                        {{"seed", 1}, {"out", out}, {"crop", {{"keypoints", kp_file}, {"images", "img"}}}});
  };
  ASSERT_EQ(invoke("crop", config("good.jsonl", "good")).code, 0);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(dir / "good")) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3u);
  EXPECT_TRUE(fs::exists(dir / "good" / "0_p1.png"));
  EXPECT_EQ(load_png(dir / "good" / "0_p1.png").width(), 25);

  const auto mixed = invoke("crop", config("mixed.jsonl", "mixed"));
  EXPECT_EQ(mixed.code, 0);
  EXPECT_NE(mixed.err.find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "mixed" / "0_p1.png"));

  EXPECT_EQ(invoke("crop", config("bad.jsonl", "bad")).code, 2);
}

TEST(CliCrop, SixteenBitInputNeedsFlag) {
  TempDir dir("cli");
  fs::create_directories(dir / "img");
  jersey::testing::write_png16(dir / "img" / "deep.png", 32, 32, 65535);
  {
    std::ofstream os(dir / "kp.jsonl");
    os << kp("deep.png") << "\n";
  }
  const auto cfg = write_config(dir / "c.json", {{"seed", 1}, {"out", "out"}, {"crop", {{"keypoints", "kp.jsonl"}, {"images", "img"}}}});
  const auto rejected = invoke("crop", cfg);
  EXPECT_EQ(rejected.code, 2);
  EXPECT_NE(rejected.err.find("16-bit"), std::string::npos);
  ASSERT_EQ(invoke("crop", cfg, {.allow_16bit = true}).code, 0);
  EXPECT_EQ(load_png(dir / "out" / "0_deep.png").pixel(0, 0), (Color{255, 255, 255}));
}

/// Three solid-color classes with small shade jitter; trivially separable.
Manifest write_color_dataset(const fs::path& root, std::size_t per_class) {
  fs::create_directories(root);
  const std::vector<std::pair<int, Color>> classes = {{5, {200, 20, 20}}, {42, {20, 200, 20}}, {100, {20, 20, 200}}};
  Manifest m{root, {}};
  for (const auto& [cls, color] : classes) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto d = static_cast<std::uint8_t>(i * 3);
      const std::string name = std::to_string(cls) + "_" + std::to_string(i) + ".png";
      save_png(Image(12, 12, Color{static_cast<std::uint8_t>(color.r + d), static_cast<std::uint8_t>(color.g + d),
                                   static_cast<std::uint8_t>(color.b + d)}),
               root / name);
      Record r;
      r.path = name;
      r.cls = cls;
      r.digits = digits_for_class(cls);
      r.source = "test";
      m.records.push_back(r);
    }
  }
  write_manifest(m, root / "manifest.jsonl");
  return m;
}

json train_config(const std::string& out, const std::string& objective, int stages) {
  json st = json::array();
  for (int k = 0; k < stages; ++k) {
    st.push_back({{"name", "s" + std::to_string(k)},
                  {"manifest", "colors/manifest.jsonl"},
                  {"epochs", 15},
                  {"batch_size", 8},
                  {"lr", objective == "multi-label" ? 0.5 : 0.05},
                  {"val_fraction", 0.2}});
  }
  return {{"seed", 21},
          {"out", out},
          {"train", {{"objective", objective}, {"model", {{"input_size", 8}, {"channels", {4}}}}, {"stages", st}}}};
}

class CliTrainEval : public ::testing::Test {
 protected:
  void SetUp() override { write_color_dataset(dir_ / "colors", 10); }
  TempDir dir_{"cli_train"};
};

TEST_F(CliTrainEval, SingleStageWritesCheckpointAndReport) {
  const auto r = invoke("train", write_config(dir_ / "t.json", train_config("run", "multi-class", 1)));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"stage0.ckpt", "model.ckpt", "report.json", "timing.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const json report = json::parse(jersey::testing::read_bytes(dir_ / "run" / "report.json"));
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0]["stage"], "s0");
  EXPECT_EQ(report[0]["val_accuracy"].size(), 15u);
  EXPECT_FALSE(report[0].contains("wall_seconds"));
  const auto ckpt = nn::load_checkpoint(dir_ / "run" / "model.ckpt");
  EXPECT_EQ(ckpt.model.config.head, 101);
  EXPECT_EQ(ckpt.metadata["stages_completed"], 1);
}

TEST_F(CliTrainEval, ResumeContinuesIdentically) {
  const auto cfg = write_config(dir_ / "t.json", train_config("full", "multi-class", 2));
  ASSERT_EQ(invoke("train", cfg).code, 0);
  const auto r = invoke("train", cfg, {.out = dir_ / "resumed", .resume = dir_ / "full" / "stage0.ckpt"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "resumed" / "stage0.ckpt"));
  EXPECT_EQ(jersey::testing::read_bytes(dir_ / "full" / "model.ckpt"),
            jersey::testing::read_bytes(dir_ / "resumed" / "model.ckpt"));
  EXPECT_EQ(jersey::testing::read_bytes(dir_ / "full" / "report.json"),
            jersey::testing::read_bytes(dir_ / "resumed" / "report.json"));
}

TEST_F(CliTrainEval, HeadMismatchExitsOne) {
  json doc = train_config("run", "multi-label", 1);
  doc["train"]["model"]["head"] = 101;
  EXPECT_EQ(invoke("train", write_config(dir_ / "t.json", doc)).code, 1);
  doc = train_config("run", "multi-class", 1);
  doc["train"]["stages"][0]["manifest"] = "nowhere.jsonl";
  EXPECT_EQ(invoke("train", write_config(dir_ / "m.json", doc)).code, 1);
}

TEST_F(CliTrainEval, EvalOracleMissingCheckpointAndSchema) {
  ASSERT_EQ(invoke("train", write_config(dir_ / "mc.json", train_config("mc", "multi-class", 1))).code, 0);
  ASSERT_EQ(invoke("train", write_config(dir_ / "ml.json", train_config("ml", "multi-label", 1))).code, 0);
  json doc = {{"seed", 1},
              {"out", "eval"},
              {"eval",
               {{"test", "colors/manifest.jsonl"},
                {"multi_class", "mc/model.ckpt"},
                {"multi_label", "ml/model.ckpt"},
                {"train_manifest", "colors/manifest.jsonl"},
                {"heatmap", true}}}};
  const auto r = invoke("eval", write_config(dir_ / "e.json", doc));
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(jersey::testing::read_bytes(dir_ / "eval" / "eval.json"));
  EXPECT_EQ(report["total"], 30);
  EXPECT_EQ(report["heads"]["multi-class"]["accuracy"], 1.0);
  EXPECT_EQ(report["heads"]["multi-label"]["accuracy"], 1.0);
  EXPECT_EQ(report["heads"]["ensemble"]["accuracy"], 1.0);
  EXPECT_EQ(report["agreement_rate"], 1.0);
  for (const char* key : {"total", "threshold", "ensemble_rule", "support", "heads", "agreement_rate"}) {
    EXPECT_TRUE(report.contains(key)) << key;
  }
  EXPECT_EQ(report["support"].size(), 101u);
  EXPECT_EQ(report["heads"]["multi-class"]["per_class_accuracy"].size(), 101u);
  for (const char* f : {"confusion_multi_class.csv", "confusion_ensemble.csv", "confusion_ensemble.png"}) {
    EXPECT_TRUE(fs::exists(dir_ / "eval" / f)) << f;
  }

  doc["eval"]["multi_class"] = "mc/absent.ckpt";
  EXPECT_EQ(invoke("eval", write_config(dir_ / "e2.json", doc)).code, 1);
  doc["eval"]["multi_class"] = "ml/model.ckpt";  // wrong head in the multi-class slot
  EXPECT_EQ(invoke("eval", write_config(dir_ / "e3.json", doc)).code, 1);
}

TEST(CliBinary, ExitCodes) {
  TempDir dir("cli_bin");
  const auto cfg = write_config(dir / "gen.json", simple_config(dir / "out"));
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), 1);
  EXPECT_EQ(run_binary("gen-simple2d"), 1);
  EXPECT_EQ(run_binary("gen-simple2d " + cfg.string() + " --no-such-flag"), 1);
  EXPECT_EQ(run_binary("gen-simple2d " + (dir / "absent.json").string()), 1);
  EXPECT_EQ(run_binary("gen-simple2d " + cfg.string() + " --dry-run"), 0);
  EXPECT_FALSE(fs::exists(dir / "out"));
  EXPECT_EQ(run_binary("gen-simple2d " + cfg.string() + " --jobs 2"), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.jsonl"));
  { std::ofstream os(dir / "plain_file"); }
  EXPECT_EQ(run_binary("gen-simple2d " + cfg.string() + " --out " + (dir / "plain_file" / "x").string()), 2);
}

}  // namespace
