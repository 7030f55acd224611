#include "dcpnet/bank.hpp"

#include <string>

#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace F = torch::nn::functional;

PseudoLabelRecord PseudoLabelRecord::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw ArgumentError("pseudo-label probability vector is empty");
  PseudoLabelRecord rec;
  rec.probs = std::move(probs);
  rec.label = 0;
  for (std::size_t i = 1; i < rec.probs.size(); ++i) {
    if (rec.probs[i] > rec.probs[rec.label]) rec.label = static_cast<int>(i);
  }
  rec.confidence = rec.probs[rec.label];
  return rec;
}

PseudoLabelRecord blend_pseudo_probs(std::span<const double> p_w, std::span<const double> p_s, double c) {
  if (p_w.size() != p_s.size()) {
    throw ArgumentError("blend_pseudo_probs: length mismatch (" + std::to_string(p_w.size()) + " vs " +
                        std::to_string(p_s.size()) + ")");
  }
  if (!(c >= 0.0 && c <= 1.0)) throw ArgumentError("blend_pseudo_probs: c must lie in [0, 1]");
  std::vector<double> probs(p_w.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = c * p_w[i] + (1.0 - c) * p_s[i];
  }
  return PseudoLabelRecord::from_probs(std::move(probs));
}

bool confidence_mask(const PseudoLabelRecord& record, double threshold) { return record.confidence >= threshold; }

std::vector<std::int64_t> filter_negatives(const PseudoLabelRecord& anchor, const MemoryBank& bank, double threshold) {
  const auto k = bank.size();
  if (k == 0) throw ArgumentError("filter_negatives: empty bank");
  if (static_cast<std::int64_t>(bank.records.size()) != k) {
    throw StateError("filter_negatives: bank has " + std::to_string(bank.records.size()) + " records for " +
                     std::to_string(k) + " features");
  }
  std::vector<std::int64_t> kept;
  kept.reserve(static_cast<std::size_t>(k));
  const bool anchor_reliable = confidence_mask(anchor, threshold);
  for (std::int64_t j = 0; j < k; ++j) {
    const auto& rec = bank.records[static_cast<std::size_t>(j)];
    const bool eliminate = anchor_reliable && confidence_mask(rec, threshold) && rec.label == anchor.label;
    if (!eliminate) kept.push_back(j);
  }
  return kept;
}

MemoryBank rebuild_bank(const torch::Tensor& features, std::vector<PseudoLabelRecord> records, int epoch) {
  if (!features.defined() || features.dim() != 2) throw ArgumentError("rebuild_bank: features must be N x d");
  if (features.size(0) != static_cast<std::int64_t>(records.size())) {
    throw ArgumentError("rebuild_bank: " + std::to_string(features.size(0)) + " feature rows but " +
                        std::to_string(records.size()) + " records");
  }
  MemoryBank bank;
  const auto f64 = features.detach().to(torch::kFloat64);
  bank.features = (f64 / f64.norm(2, 1, true).clamp_min(1e-12)).to(torch::kFloat32).contiguous();
  bank.records = std::move(records);
  bank.source_epoch = epoch;
  return bank;
}

std::vector<PseudoLabelRecord> uniform_records(std::int64_t count, int num_classes) {
  if (num_classes < 1) throw ArgumentError("uniform_records: num_classes must be positive");
  const auto rec = PseudoLabelRecord::from_probs(std::vector<double>(num_classes, 1.0 / num_classes));
  return std::vector<PseudoLabelRecord>(static_cast<std::size_t>(count), rec);
}

}  // namespace dcpnet
