#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcpnet/evaluation.hpp"
#include "dcpnet/model.hpp"
#include "dcpnet/pretrain.hpp"
#include "dcpnet/synth.hpp"

namespace dcpnet {

enum class DatasetKind { directory, synthetic };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::string path;     // directory datasets
  SynthSpec synthetic;  // synthetic datasets
  int crop_size = 224;
  double test_fraction = 0.3;  // held-out share of labeled data for evaluation

  bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  std::vector<EvalProtocol> eval{EvalProtocol{}};
  std::string output_dir;
  std::uint64_t seed = 0;
  int workers = 1;  // torch intra-op threads; 1 gives bit-reproducible runs
  bool plots = true;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses a JSON config. Unknown keys are rejected; missing keys take defaults.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
/// Reads and parses `path`; also checks that a directory dataset exists.
ExperimentConfig load_config(const std::string& path);
/// Full JSON rendering with every field explicit; parse_config inverts it.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace dcpnet
