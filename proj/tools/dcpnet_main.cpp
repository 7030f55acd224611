// dcpnet <command> --config <path> [--checkpoint <path>] [--seed N]
#include <iostream>

#include "CLI11.hpp"
#include "dcpnet/config.hpp"
#include "dcpnet/errors.hpp"
#include "dcpnet/harness.hpp"
#include "dcpnet/synth.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-stream contrastive predictive pretraining and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::string export_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_flag("-q,--quiet", quiet, "No progress output");
  };
  for (const char* name : {"pretrain", "evaluate", "ablate", "full"}) {
    std::string help = std::string(name) == "pretrain"   ? "Self-supervised pretraining with checkpoints"
                       : std::string(name) == "evaluate" ? "Evaluate a checkpoint with the configured protocols"
                       : std::string(name) == "ablate"   ? "Toggle grid over hand/cluster/FNSE plus direct contrast"
                                                         : "Pretrain, then evaluate";
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    sub->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate (evaluate only)");
  }
  CLI::App* exp = app.add_subcommand("export-synthetic", "Write the configured synthetic dataset as PGM + labels.csv");
  add_common(exp);
  exp->add_option("--out", export_dir, "Target directory")->required();

  CLI11_PARSE(app, argc, argv);

  CLI::App* chosen = app.get_subcommands().front();
  try {
    dcpnet::ExperimentConfig cfg = dcpnet::load_config(config_path);
    dcpnet::apply_environment(cfg);
    const bool seed_given = chosen->count("--seed") > 0;
    if (chosen->get_name() == "export-synthetic") {
      dcpnet::SynthSpec spec = cfg.dataset.synthetic;
      if (seed_given) spec.seed = seed;
      dcpnet::write_collection(export_dir, dcpnet::generate(spec));
      return kOk;
    }
    dcpnet::RunOptions options;
    if (chosen->count("--checkpoint") > 0) options.checkpoint = checkpoint;
    if (seed_given) options.seed = seed;
    options.log = quiet ? nullptr : &std::cerr;
    return dcpnet::run(cfg, dcpnet::parse_command(chosen->get_name()), options);
  } catch (const dcpnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
