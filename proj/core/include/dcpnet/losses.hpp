#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace dcpnet {

/// Convex combination weights of the three training objectives.
struct LossWeights {
  double alpha = 0.2;  // handcrafted prediction
  double beta = 0.6;   // instance contrast
  double gamma = 0.2;  // cluster consistency

  /// Throws ConfigError unless all weights are non-negative and sum to 1 (1e-9).
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Softmax temperature; construction rejects non-positive values.
class Temperature {
 public:
  explicit Temperature(double value);
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// Negatives available to each anchor: a shared K x d bank plus an N x K
/// boolean keep-mask. An undefined bank means no negatives; an undefined
/// mask keeps every bank row for every anchor.
struct NegativePool {
  torch::Tensor bank;
  torch::Tensor keep;

  static NegativePool none() { return {}; }
  static NegativePool all_of(torch::Tensor bank) { return {std::move(bank), {}}; }
  /// Per-anchor index lists into `bank`.
  static NegativePool from_indices(torch::Tensor bank, const std::vector<std::vector<std::int64_t>>& kept);
  /// Per-anchor negative matrices (K_i x d, K_i may be 0), packed into one bank.
  static NegativePool from_per_anchor(const std::vector<torch::Tensor>& negatives, std::int64_t dim);
};

/// 2 - 2 cos(z_pred, x_h), averaged over rows. Accepts [d] or [N, d].
/// x_h is a fixed target (detached).
torch::Tensor hand_prediction_loss(const torch::Tensor& z_pred, const torch::Tensor& x_h);

/// InfoNCE of anchors against aligned positives and the pool's kept negatives.
/// Every input is L2-normalized first; bank rows receive no gradient.
torch::Tensor instance_contrastive_loss(const torch::Tensor& anchors, const torch::Tensor& positives,
                                        const NegativePool& negatives, Temperature tau);

/// Cluster-level contrast between the M columns of two N x M assignment
/// matrices (cosine similarity between columns). Requires M >= 2.
torch::Tensor cluster_consistency_loss(const torch::Tensor& c_p, const torch::Tensor& c_q, Temperature tau);

torch::Tensor overall_loss(const torch::Tensor& l_hand, const torch::Tensor& l_inst, const torch::Tensor& l_clust,
                           const LossWeights& w);
double overall_loss(double l_hand, double l_inst, double l_clust, const LossWeights& w);

}  // namespace dcpnet
