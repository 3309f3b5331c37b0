#include <iostream>

#include <CLI11.hpp>

#include "orgpose/cli/commands.hpp"
#include "orgpose/numerics/memory.hpp"

int main(int argc, char** argv) {
  orgpose::nn::configure_allocator();
  using namespace orgpose::cli;

  CLI::App app{"Object relation graph pose regression on synthetic desk-scale scenes"};
  app.require_subcommand(1);
  CommandOptions options;
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string split;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON configuration file");
    cmd->add_option("--seed", seed, "Seed overriding the configuration");
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out, "Dataset directory")->required();
  auto* train = app.add_subcommand("train", "Train a pose regressor");
  add_common(train);
  train->add_option("--out", out, "Run directory for checkpoint and log")->required();
  train->add_option("--checkpoint", checkpoint, "Checkpoint to resume from");
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--out", out, "Directory for metrics and trajectory (default: next to the checkpoint)");
  auto* gradcheck = app.add_subcommand("gradcheck", "Check gradients against finite differences");
  add_common(gradcheck);
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the ablation grid");
  add_common(ablate);
  ablate->add_option("--out", out, "Directory for the result tables")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  auto* active = app.get_subcommands().front();
  if (!config.empty()) options.config = config;
  if (!out.empty()) options.out = out;
  if (!checkpoint.empty()) options.checkpoint = checkpoint;
  if (!split.empty()) options.split = split;
  if (active->count("--seed") > 0) options.seed = seed;

  auto dispatch = [&]() -> int {
    const auto name = active->get_name();
    if (name == "synth") return cmd_synth(options, std::cout);
    if (name == "train") return cmd_train(options, std::cout);
    if (name == "eval") return cmd_eval(options, std::cout);
    if (name == "gradcheck") return cmd_gradcheck(options, std::cout);
    return cmd_ablate(options, std::cout);
  };
  return run_command(dispatch, std::cerr);
}
