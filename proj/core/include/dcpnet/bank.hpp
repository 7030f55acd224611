#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace dcpnet {

/// Blended class-probability vector with its argmax label and confidence.
struct PseudoLabelRecord {
  std::vector<double> probs;
  int label = 0;
  double confidence = 0.0;

  /// Derives label (lowest index on ties) and confidence from probs.
  static PseudoLabelRecord from_probs(std::vector<double> probs);
  bool operator==(const PseudoLabelRecord&) const = default;
};

/// Epoch-level store of unit-norm strong-view features and their pseudo-labels.
/// Rows are in dataset order. A bank with source_epoch 0 was collected before
/// any training epoch and carries no usable pseudo-labels.
struct MemoryBank {
  torch::Tensor features;  // K x d, float32, unit rows
  std::vector<PseudoLabelRecord> records;
  int source_epoch = 0;

  std::int64_t size() const { return features.defined() ? features.size(0) : 0; }
  std::int64_t dim() const { return features.defined() ? features.size(1) : 0; }
  bool has_pseudo_labels() const { return source_epoch >= 1; }
};

/// probs = c * p_w + (1 - c) * p_s.
PseudoLabelRecord blend_pseudo_probs(std::span<const double> p_w, std::span<const double> p_s, double c);

/// True iff the record's confidence reaches the threshold (>=).
bool confidence_mask(const PseudoLabelRecord& record, double threshold);

/// Indices of bank entries kept as negatives for `anchor`. An entry is dropped only
/// when it is itself reliable and shares the anchor's label; unreliable anchors keep all.
std::vector<std::int64_t> filter_negatives(const PseudoLabelRecord& anchor, const MemoryBank& bank, double threshold);

/// Replaces the bank with L2-normalized copies of `features`.
MemoryBank rebuild_bank(const torch::Tensor& features, std::vector<PseudoLabelRecord> records, int epoch);

/// Uniform records for a bank collected before pseudo-labels exist.
std::vector<PseudoLabelRecord> uniform_records(std::int64_t count, int num_classes);

}  // namespace dcpnet
