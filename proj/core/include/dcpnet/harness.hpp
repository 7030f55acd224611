#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dcpnet/config.hpp"
#include "dcpnet/dataset.hpp"
#include "dcpnet/evaluation.hpp"
#include "dcpnet/pretrain.hpp"

namespace dcpnet {

enum class Command { pretrain, evaluate, ablate, full };

std::string to_string(Command command);
Command parse_command(std::string_view name);

struct RunOptions {
  std::optional<std::string> checkpoint;  // evaluate: defaults to <output_dir>/checkpoints/final.ckpt
  std::optional<std::uint64_t> seed;      // overrides config.seed
  std::ostream* log = nullptr;            // progress lines; null for silence
};

/// Replaces output_dir with $DCPNET_OUTPUT_DIR when that variable is set and nonempty.
void apply_environment(ExperimentConfig& cfg);

/// The configured dataset: ingested from disk or generated, then resized to crop_size.
ChipCollection load_dataset(const ExperimentConfig& cfg, std::ostream& warnings);

/// Labeled data splits into train/test; unlabeled data is all "train".
SplitCollections prepare_splits(const ExperimentConfig& cfg, const ChipCollection& all);

/// Model config with num_classes filled from the data when left at 0.
ModelConfig resolve_model(const ExperimentConfig& cfg, const ChipCollection& all);

/// One line of epochs.jsonl.
std::string epoch_report_json(const EpochReport& report);

struct AblationVariant {
  std::string name;
  AblationConfig ablation;
  bool fnse = true;
};

/// The 2x2x2 grid over (hand_task, cluster_task, fnse) followed by direct-contrast mode.
std::vector<AblationVariant> ablation_grid();

/// Executes `command`, writing every artifact under cfg.output_dir:
///   epochs.jsonl, checkpoints/, results.csv, confusion/, ablation.csv,
///   *.svg (when cfg.plots), config.json and run_meta.json (the only file with timestamps).
/// Returns 0 on success; failures propagate as dcpnet::Error.
int run(ExperimentConfig cfg, Command command, const RunOptions& options = {});

}  // namespace dcpnet
