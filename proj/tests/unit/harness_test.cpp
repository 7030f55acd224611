#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sys/wait.h>
#include <tuple>
#include <sstream>

#include "dcpnet/checkpoint.hpp"
#include "dcpnet/config.hpp"
#include "dcpnet/errors.hpp"
#include "dcpnet/harness.hpp"

namespace dcpnet {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const fs::path& path) {
  std::ifstream in(path);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

ExperimentConfig small_config(const std::string& name, int epochs = 3) {
  ExperimentConfig cfg;
  cfg.dataset.synthetic.chip_size = 32;
  cfg.dataset.synthetic.chips_per_class = 8;
  cfg.dataset.synthetic.seed = 1;
  cfg.dataset.crop_size = 32;
  cfg.model.encoder.backbone = BackboneFamily::resnet_tiny;
  cfg.model.encoder.projection_dim = 32;
  cfg.model.ema_momentum = 0.99;
  cfg.train.epochs = epochs;
  cfg.train.batch_size = 4;
  cfg.train.checkpoint_every = 2;
  cfg.eval = {EvalProtocol{.k = 3}};
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  cfg.output_dir = dir.string();
  return cfg;
}

TEST(Harness, FullWritesEveryArtifact) {
  ExperimentConfig cfg = small_config("dcpnet_h_full", 5);
  EvalProtocol ft1;
  ft1.kind = ProtocolKind::ft1;
  ft1.epochs = 2;
  cfg.eval.push_back(ft1);
  ASSERT_EQ(run(cfg, Command::full), 0);
  const fs::path dir = cfg.output_dir;
  for (const char* f : {"config.json", "run_meta.json", "epochs.jsonl", "results.csv", "loss_curve.svg",
                        "accuracy.svg", "checkpoints/final.ckpt", "checkpoints/epoch_0002.ckpt",
                        "checkpoints/epoch_0004.ckpt", "confusion/00_knn_run0.csv", "confusion/01_ft1_run0.csv"}) {
    EXPECT_TRUE(fs::is_regular_file(dir / f)) << f;
  }
  EXPECT_EQ(count_lines(dir / "epochs.jsonl"), 5);
  EXPECT_EQ(count_lines(dir / "results.csv"), 3);
  EXPECT_EQ(parse_config(slurp(dir / "config.json")), cfg);
  EXPECT_EQ(load_checkpoint((dir / "checkpoints/final.ckpt").string()).epoch, 5);
}

TEST(Harness, AblateProducesNineRows) {
  ExperimentConfig cfg = small_config("dcpnet_h_ablate", 1);
  ASSERT_EQ(run(cfg, Command::ablate), 0);
  const fs::path dir = cfg.output_dir;
  std::ifstream in(dir / "ablation.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "variant,hand_task,cluster_task,fnse,direct_contrast,protocol,mean,std");
  std::vector<std::string> names;
  for (std::string line; std::getline(in, line);) names.push_back(line.substr(0, line.find(',')));
  ASSERT_EQ(names.size(), 9u);
  EXPECT_EQ(names.front(), "hand1_clust1_fnse1");
  EXPECT_EQ(names.back(), "direct_contrast");
  for (const auto& n : names) EXPECT_TRUE(fs::is_regular_file(dir / "ablation" / n / "epochs.jsonl")) << n;
  EXPECT_TRUE(fs::is_regular_file(dir / "ablation.svg"));
}

TEST(Harness, GridCoversEveryToggleOnce) {
  const auto grid = ablation_grid();
  ASSERT_EQ(grid.size(), 9u);
  std::set<std::tuple<bool, bool, bool>> seen;
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_FALSE(grid[i].ablation.direct_contrast_mode);
    seen.insert({grid[i].ablation.hand_task, grid[i].ablation.cluster_task, grid[i].fnse});
  }
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_TRUE(grid[8].ablation.direct_contrast_mode);
}

TEST(Harness, EvaluateTwiceGivesIdenticalTables) {
  ExperimentConfig cfg = small_config("dcpnet_h_eval", 2);
  ASSERT_EQ(run(cfg, Command::pretrain), 0);
  const fs::path dir = cfg.output_dir;
  ASSERT_TRUE(fs::is_regular_file(dir / "checkpoints/final.ckpt"));
  ASSERT_EQ(run(cfg, Command::evaluate), 0);
  const std::string first = slurp(dir / "results.csv");
  const std::string confusion = slurp(dir / "confusion/00_knn_run0.csv");
  ASSERT_EQ(run(cfg, Command::evaluate), 0);
  EXPECT_EQ(slurp(dir / "results.csv"), first);
  EXPECT_EQ(slurp(dir / "confusion/00_knn_run0.csv"), confusion);
}

TEST(Harness, EvaluateWithoutCheckpointIsAStateError) {
  ExperimentConfig cfg = small_config("dcpnet_h_nockpt");
  EXPECT_THROW(run(cfg, Command::evaluate), StateError);
  RunOptions opts;
  opts.checkpoint = "/nonexistent/final.ckpt";
  EXPECT_THROW(run(cfg, Command::evaluate, opts), StateError);
}

TEST(Harness, CheckpointsAreByteDeterministic) {
  ExperimentConfig a = small_config("dcpnet_h_det_a", 2);
  ExperimentConfig b = small_config("dcpnet_h_det_b", 2);
  ASSERT_EQ(run(a, Command::pretrain), 0);
  ASSERT_EQ(run(b, Command::pretrain), 0);
  EXPECT_EQ(slurp(fs::path(a.output_dir) / "checkpoints/final.ckpt"),
            slurp(fs::path(b.output_dir) / "checkpoints/final.ckpt"));
  EXPECT_EQ(slurp(fs::path(a.output_dir) / "epochs.jsonl"), slurp(fs::path(b.output_dir) / "epochs.jsonl"));
  RunOptions other;
  other.seed = 9;
  ASSERT_EQ(run(b, Command::pretrain, other), 0);
  EXPECT_NE(slurp(fs::path(a.output_dir) / "checkpoints/final.ckpt"),
            slurp(fs::path(b.output_dir) / "checkpoints/final.ckpt"));
}

TEST(Harness, UnknownCommandIsAnArgumentError) {
  EXPECT_EQ(parse_command("ablate"), Command::ablate);
  EXPECT_EQ(to_string(Command::full), "full");
  EXPECT_THROW(parse_command("train"), ArgumentError);
}

TEST(Harness, EnvironmentOverridesTheOutputDirectory) {
  ExperimentConfig cfg = small_config("dcpnet_h_env");
  ::setenv("DCPNET_OUTPUT_DIR", "/tmp/dcpnet_env_override", 1);
  apply_environment(cfg);
  ::unsetenv("DCPNET_OUTPUT_DIR");
  EXPECT_EQ(cfg.output_dir, "/tmp/dcpnet_env_override");
  ExperimentConfig untouched = small_config("dcpnet_h_env");
  apply_environment(untouched);
  EXPECT_EQ(untouched.output_dir, (fs::temp_directory_path() / "dcpnet_h_env").string());
}

TEST(Harness, UnlabeledDataCannotBeEvaluated) {
  ExperimentConfig cfg = small_config("dcpnet_h_unlabeled");
  ChipCollection all;
  all.chips.assign(4, ImageChip(32, 32, 0.5f));
  const auto splits = prepare_splits(cfg, all);
  EXPECT_EQ(splits.train.size(), 4u);
  EXPECT_EQ(splits.test.size(), 0u);
  EXPECT_THROW(resolve_model(cfg, all), ConfigError);
  cfg.model.num_classes = 3;
  EXPECT_EQ(resolve_model(cfg, all).num_classes, 3);
}

#ifdef DCPNET_CLI_PATH
int cli(const std::string& args) {
  const std::string cmd = std::string(DCPNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fs::temp_directory_path() / "dcpnet_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ExperimentConfig cfg = small_config("dcpnet_cli/out", 1);
  std::ofstream(dir / "ok.json") << serialize_config(cfg);
  std::ofstream(dir / "bad.json") << R"({"dataset": {}, "output_dir": "o", "bogus": 1})";

  EXPECT_EQ(cli("full -q --config " + (dir / "ok.json").string()), 0);
  EXPECT_TRUE(fs::is_regular_file(dir / "out/results.csv"));
  EXPECT_EQ(cli("evaluate -q --config " + (dir / "ok.json").string()), 0);
  EXPECT_EQ(cli("evaluate -q --config " + (dir / "ok.json").string() + " --checkpoint /nonexistent.ckpt"), 1);
  EXPECT_EQ(cli("full -q --config " + (dir / "bad.json").string()), 2);
  EXPECT_NE(cli("full -q"), 0);
  EXPECT_NE(cli("frobnicate"), 0);
  EXPECT_EQ(cli("export-synthetic --config " + (dir / "ok.json").string() + " --out " + (dir / "chips").string()), 0);
  EXPECT_TRUE(fs::is_regular_file(dir / "chips/labels.csv"));
  EXPECT_EQ(cli("--help"), 0);
}
#endif

}  // namespace
}  // namespace dcpnet
