#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "dcpnet/augment.hpp"
#include "dcpnet/bank.hpp"
#include "dcpnet/hog.hpp"
#include "dcpnet/losses.hpp"
#include "dcpnet/model.hpp"

namespace dcpnet {

struct FnseConfig {
  bool enabled = true;
  double threshold = 0.95;
  double c = 0.7;  // weight of the weak view in the pseudo-label blend

  bool operator==(const FnseConfig&) const = default;
};

struct AblationConfig {
  bool hand_task = true;
  bool cluster_task = true;
  /// Replace the handcrafted prediction term by InfoNCE with (weak, handcrafted) as positives.
  bool direct_contrast_mode = false;

  bool operator==(const AblationConfig&) const = default;
};

/// Where the bank's pseudo-labels come from: the epoch's own training batches,
/// or a separate inference pass after the epoch.
enum class PseudoLabelSource { in_flight, end_of_epoch };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 0.03;
  double weight_decay = 1e-4;
  double momentum = 0.9;  // SGD momentum
  bool cosine_schedule = true;
  LossWeights loss_weights;
  double tau = 0.2;
  FnseConfig fnse;
  AblationConfig ablation;
  PseudoLabelSource pseudo_label_source = PseudoLabelSource::in_flight;
  /// Drop each anchor's own bank row from its negatives.
  bool exclude_self_negative = true;
  int checkpoint_every = 10;
  AugConfig augment;
  HogConfig hog;

  void validate() const;
  /// Loss weights after switching off ablated tasks and renormalizing to sum 1.
  LossWeights effective_weights() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochReport {
  int epoch = 0;
  double mean_loss_hand = 0.0;
  double mean_loss_inst = 0.0;
  double mean_loss_clust = 0.0;
  double mean_loss_overall = 0.0;
  double eliminated_fraction = 0.0;
  std::int64_t bank_size = 0;
  double learning_rate = 0.0;
  LossWeights weights;
};

struct BatchLosses {
  double hand = 0.0;
  double inst = 0.0;
  double clust = 0.0;
  double overall = 0.0;
};

struct EpochOutput {
  EpochReport report;
  std::vector<BatchLosses> batches;
  torch::Tensor features;  // strong-view target embeddings, dataset order
  std::vector<PseudoLabelRecord> records;
};

/// Row-wise blend of weak and strong classifier outputs.
std::vector<PseudoLabelRecord> update_pseudo_labels(const torch::Tensor& class_probs_w,
                                                    const torch::Tensor& class_probs_s, double c);

/// Owns the model, the optimizer and the per-chip handcrafted views for one pretraining run.
class PretrainSession {
 public:
  PretrainSession(ModelState state, TrainConfig cfg, std::span<const ImageChip> data, std::uint64_t seed);

  /// Bank collected from the current target encoder with uniform pseudo-labels.
  MemoryBank bootstrap_bank();

  /// One pass over the data. `bank` may be null (no negatives). Epochs count from 1.
  EpochOutput train_epoch(int epoch, const MemoryBank* bank);

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t dataset_size() const { return data_.size(); }

 private:
  std::vector<std::vector<std::size_t>> epoch_batches(int epoch) const;
  std::vector<ViewTriple> views_for(std::span<const std::size_t> indices, int epoch, std::uint64_t stream) const;
  void collect_pass(int epoch, torch::Tensor& features, std::vector<PseudoLabelRecord>& records);

  ModelState state_;
  TrainConfig cfg_;
  std::vector<ImageChip> data_;
  std::vector<ImageChip> handcrafted_;
  std::uint64_t seed_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
};

struct PretrainResult {
  ModelState state;
  std::vector<EpochReport> reports;
  MemoryBank bank;
};

/// Called after every epoch with the epoch's report and the rebuilt bank.
using EpochCallback = std::function<void(const EpochReport&, const ModelState&, const MemoryBank&)>;

PretrainResult run_pretraining(const TrainConfig& cfg, const ModelConfig& model, std::span<const ImageChip> data,
                               std::uint64_t seed, const EpochCallback& on_epoch = {});

}  // namespace dcpnet
