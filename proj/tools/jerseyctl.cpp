#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "jersey/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic jersey-number data, training and evaluation"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> threshold;
  std::optional<int> jobs;
  std::optional<std::string> resume;
  bool dry_run = false;
  bool allow_16bit = false;

  for (const auto& name : jersey::cli::command_names()) {
    auto* cmd = app.add_subcommand(name);
    cmd->add_option("config", config, "JSON run configuration")->required();
    cmd->add_option("--seed", seed, "Global seed (overrides the config)");
    cmd->add_option("--out", out, "Output directory (overrides the config)");
    cmd->add_option("--threshold", threshold, "Confidence threshold in [0, 1]");
    cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--dry-run", dry_run, "Validate and print the plan without writing");
    cmd->add_flag("--allow-16bit", allow_16bit, "Downconvert 16-bit input PNGs instead of rejecting them");
    if (name == "train") cmd->add_option("--resume", resume, "Continue from a stage checkpoint");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : jersey::cli::kExitConfig;
  }

  jersey::cli::Overrides flags;
  flags.seed = seed;
  if (out) flags.out = *out;
  flags.threshold = threshold;
  flags.jobs = jobs;
  if (resume) flags.resume = *resume;
  flags.dry_run = dry_run;
  flags.allow_16bit = allow_16bit;
  return jersey::cli::run(app.get_subcommands().front()->get_name(), config, flags);
}
