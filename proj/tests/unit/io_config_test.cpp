#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcpnet/config.hpp"
#include "dcpnet/errors.hpp"
#include "dcpnet/io.hpp"
#include "support.hpp"

namespace dcpnet {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path.string();
}

const char* kMinimal = R"({"dataset": {"kind": "synthetic"}, "output_dir": "out"})";

TEST(Config, MinimalConfigTakesTheDefaults) {
  const auto dir = fresh_dir("dcpnet_cfg_minimal");
  const ExperimentConfig cfg = load_config(write_file(dir / "c.json", kMinimal));
  EXPECT_EQ(cfg.train.loss_weights.alpha, 0.2);
  EXPECT_EQ(cfg.train.loss_weights.beta, 0.6);
  EXPECT_EQ(cfg.train.loss_weights.gamma, 0.2);
  ASSERT_EQ(cfg.eval.size(), 1u);
  EXPECT_EQ(cfg.eval.front().kind, ProtocolKind::knn);
  EXPECT_EQ(cfg.eval.front().k, 45);
  EXPECT_EQ(cfg.dataset.crop_size, 224);
  EXPECT_EQ(cfg.train.fnse.threshold, 0.95);
  EXPECT_EQ(cfg.train.fnse.c, 0.7);
  EXPECT_EQ(cfg.train.tau, 0.2);
  EXPECT_EQ(cfg.model.ema_momentum, 0.999);
  EXPECT_EQ(cfg.model.encoder.backbone, BackboneFamily::resnet18);
  EXPECT_EQ(cfg.output_dir, "out");
  EXPECT_EQ(cfg.workers, 1);
}

TEST(Config, WeightsMustSumToOne) {
  try {
    parse_config(R"({"dataset": {}, "output_dir": "o", "train": {"loss_weights": {"alpha": 0.3, "beta": 0.3, "gamma": 0.3}}})");
    FAIL() << "accepted weights summing to 0.9";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("loss_weights"), std::string::npos);
  }
}

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
  try {
    parse_config(R"({"dataset": {}, "output_dir": "o", "train": {"fnse": {"treshold": 0.9}}})");
    FAIL() << "accepted a misspelled key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.fnse.treshold"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config(R"({"dataset": {}, "output_dir": "o", "extra": 1})"), ConfigError);
}

TEST(Config, BadValuesAreConfigurationErrors) {
  EXPECT_THROW(parse_config(R"({"output_dir": "o"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {"crop_size": 100}, "output_dir": "o"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {}, "output_dir": "o", "model": {"backbone": "vgg"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {}, "output_dir": "o", "eval": [{"kind": "ft9"}]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {}, "output_dir": "o", "train": {"epochs": "ten"}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, MissingDirectoryDatasetIsRejected) {
  const auto dir = fresh_dir("dcpnet_cfg_missing");
  const auto path = write_file(dir / "c.json", R"({"dataset": {"kind": "directory", "path": "/nonexistent/chips"}, "output_dir": "o"})");
  EXPECT_THROW(load_config(path), ConfigError);
  EXPECT_THROW(parse_config(R"({"dataset": {"kind": "directory"}, "output_dir": "o"})"), ConfigError);
}

TEST(Config, SerializeRoundTrips) {
  ExperimentConfig cfg = parse_config(kMinimal);
  EXPECT_EQ(parse_config(serialize_config(cfg)), cfg);

  cfg.dataset.synthetic.n_classes = 3;
  cfg.dataset.synthetic.speckle_level = 0.35;
  cfg.dataset.crop_size = 64;
  cfg.model.encoder.backbone = BackboneFamily::resnet_tiny;
  cfg.model.encoder.projection_dim = 48;
  cfg.model.ema_momentum = 0.99;
  cfg.model.num_classes = 3;
  cfg.train.epochs = 7;
  cfg.train.learning_rate = 0.0125;
  cfg.train.loss_weights = {0.1, 0.7, 0.2};
  cfg.train.ablation.direct_contrast_mode = true;
  cfg.train.fnse.enabled = false;
  cfg.train.pseudo_label_source = PseudoLabelSource::end_of_epoch;
  cfg.train.augment.blur_sigma_range = {0.3, 1.7};
  cfg.train.hog.orientations = 12;
  EvalProtocol ft;
  ft.kind = ProtocolKind::ftall;
  ft.runs = 3;
  cfg.eval.push_back(ft);
  cfg.seed = 1234567890123ull;
  cfg.workers = 2;
  cfg.plots = false;
  cfg.validate();
  const std::string text = serialize_config(cfg);
  EXPECT_EQ(parse_config(text), cfg);
  EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Io, PgmRoundTrip) {
  const auto dir = fresh_dir("dcpnet_pgm");
  const ImageChip chip = test::random_chip(17, 3);
  write_pgm((dir / "a.pgm").string(), chip);
  const ImageChip back = read_pgm((dir / "a.pgm").string());
  ASSERT_EQ(back.height(), 17);
  ASSERT_EQ(back.width(), 17);
  EXPECT_LE(test::max_abs_diff(back, chip), 0.5 / 255 + 1e-6);
  write_file(dir / "ascii.pgm", "P2\n# comment\n2 2\n100\n0 50\n100 25\n");
  const ImageChip ascii = read_pgm((dir / "ascii.pgm").string());
  EXPECT_FLOAT_EQ(ascii.at(0, 1), 0.5f);
  EXPECT_FLOAT_EQ(ascii.at(1, 0), 1.0f);
}

TEST(Io, IngestResizesAndOrdersByFilename) {
  const auto dir = fresh_dir("dcpnet_ingest");
  write_pgm((dir / "b.pgm").string(), ImageChip(300, 300, 0.25f));
  write_pgm((dir / "a.pgm").string(), ImageChip(300, 400, 0.75f));
  write_file(dir / "labels.csv", "filename,label\nb.pgm,1\na.pgm,0\n");
  std::ostringstream warnings;
  const auto data = ingest_directory(dir.string(), 224, warnings);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data.names, (std::vector<std::string>{"a.pgm", "b.pgm"}));
  EXPECT_EQ(data.labels, (std::vector<int>{0, 1}));
  EXPECT_EQ(data.num_classes, 2);
  for (const auto& c : data.chips) {
    EXPECT_EQ(c.height(), 224);
    EXPECT_EQ(c.width(), 224);
  }
}

TEST(Io, ClassNameLabelsAreIndexedInSortedOrder) {
  const auto dir = fresh_dir("dcpnet_ingest_names");
  for (const char* f : {"1.pgm", "2.pgm", "3.pgm"}) write_pgm((dir / f).string(), ImageChip(8, 8, 0.5f));
  write_file(dir / "labels.csv", "1.pgm,tanker\n2.pgm,cargo\n3.pgm,tanker\n");
  std::ostringstream warnings;
  const auto data = ingest_directory(dir.string(), 8, warnings);
  EXPECT_EQ(data.labels, (std::vector<int>{1, 0, 1}));
}

TEST(Io, UnreadableFilesAreSkippedWithAWarning) {
  const auto dir = fresh_dir("dcpnet_ingest_bad");
  write_pgm((dir / "good.pgm").string(), ImageChip(16, 16, 0.5f));
  write_file(dir / "broken.pgm", "P5\nthis is not an image");
  std::ostringstream warnings;
  const auto data = ingest_directory(dir.string(), 16, warnings);
  EXPECT_EQ(data.size(), 1u);
  EXPECT_FALSE(data.labeled());
  EXPECT_NE(warnings.str().find("broken.pgm"), std::string::npos);
}

TEST(Io, EmptyDirectoryIsAnIngestionError) {
  const auto dir = fresh_dir("dcpnet_ingest_empty");
  std::ostringstream warnings;
  EXPECT_THROW(ingest_directory(dir.string(), 224, warnings), IngestionError);
  EXPECT_THROW(ingest_directory((dir / "missing").string(), 224, warnings), IngestionError);
}

}  // namespace
}  // namespace dcpnet
