#include "dcpnet/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw ConfigError("train.loss_weights: alpha, beta and gamma must be non-negative");
  }
  if (std::abs(alpha + beta + gamma - 1.0) > 1e-9) {
    throw ConfigError("train.loss_weights: alpha + beta + gamma must equal 1 (got " +
                      std::to_string(alpha + beta + gamma) + ")");
  }
}

Temperature::Temperature(double value) : value_(value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError("temperature must be positive, got " + std::to_string(value));
  }
}

NegativePool NegativePool::from_indices(torch::Tensor bank, const std::vector<std::vector<std::int64_t>>& kept) {
  const auto rows = static_cast<std::int64_t>(kept.size());
  const std::int64_t k = bank.defined() ? bank.size(0) : 0;
  auto mask = torch::zeros({rows, k}, torch::kBool);
  auto acc = mask.accessor<bool, 2>();
  for (std::int64_t i = 0; i < rows; ++i) {
    for (auto j : kept[i]) {
      if (j < 0 || j >= k) throw ArgumentError("negative index " + std::to_string(j) + " out of range");
      acc[i][j] = true;
    }
  }
  return {std::move(bank), std::move(mask)};
}

NegativePool NegativePool::from_per_anchor(const std::vector<torch::Tensor>& negatives, std::int64_t dim) {
  std::vector<torch::Tensor> parts;
  std::vector<std::vector<std::int64_t>> kept(negatives.size());
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const auto& n = negatives[i];
    if (!n.defined() || n.numel() == 0) continue;
    if (n.dim() != 2 || n.size(1) != dim) {
      throw ArgumentError("negative matrix for anchor " + std::to_string(i) + " must be K x " + std::to_string(dim));
    }
    for (std::int64_t j = 0; j < n.size(0); ++j) kept[i].push_back(offset + j);
    offset += n.size(0);
    parts.push_back(n);
  }
  if (parts.empty()) {
    return {torch::zeros({0, dim}), torch::zeros({static_cast<std::int64_t>(negatives.size()), 0}, torch::kBool)};
  }
  return from_indices(torch::cat(parts, 0), kept);
}

namespace {

torch::Tensor as_matrix(const torch::Tensor& t) { return t.dim() == 1 ? t.unsqueeze(0) : t; }

void require_nonzero_rows(const torch::Tensor& m, const char* what) {
  if (m.numel() == 0) return;
  const double min_norm = m.detach().norm(2, 1).min().item<double>();
  if (!(min_norm > 0.0)) {
    throw DegenerateInputError(std::string(what) + " contains a zero-norm vector");
  }
}

}  // namespace

torch::Tensor hand_prediction_loss(const torch::Tensor& z_pred, const torch::Tensor& x_h) {
  const auto p = as_matrix(z_pred);
  const auto t = as_matrix(x_h).detach();
  if (p.sizes() != t.sizes()) throw ArgumentError("hand_prediction_loss: shape mismatch");
  if (p.size(0) == 0) throw ArgumentError("hand_prediction_loss: empty batch");
  require_nonzero_rows(p, "z_pred");
  require_nonzero_rows(t, "x_h");
  const auto cos = (p * t).sum(1) / (p.norm(2, 1) * t.norm(2, 1));
  return (2.0 - 2.0 * cos).mean();
}

torch::Tensor instance_contrastive_loss(const torch::Tensor& anchors, const torch::Tensor& positives,
                                        const NegativePool& negatives, Temperature tau) {
  const auto a_raw = as_matrix(anchors);
  const auto p_raw = as_matrix(positives);
  if (a_raw.size(0) == 0) throw ArgumentError("instance_contrastive_loss: empty anchor set");
  if (a_raw.sizes() != p_raw.sizes()) throw ArgumentError("instance_contrastive_loss: anchors and positives differ in shape");
  const double inv_tau = 1.0 / tau.value();
  const auto a = F::normalize(a_raw, F::NormalizeFuncOptions().dim(1));
  const auto p = F::normalize(p_raw, F::NormalizeFuncOptions().dim(1));
  const auto pos = (a * p).sum(1, /*keepdim=*/true) * inv_tau;

  const bool has_bank = negatives.bank.defined() && negatives.bank.size(0) > 0;
  if (!has_bank) {
    // A positive-only softmax: logsumexp over one logit minus itself.
    return (pos - pos).mean();
  }
  const auto& bank = negatives.bank;
  if (bank.dim() != 2 || bank.size(1) != a.size(1)) {
    throw ArgumentError("instance_contrastive_loss: bank dimension does not match features");
  }
  const auto b = F::normalize(bank.detach().to(a.scalar_type()), F::NormalizeFuncOptions().dim(1));
  auto neg = a.mm(b.t()) * inv_tau;
  if (negatives.keep.defined()) {
    if (negatives.keep.size(0) != a.size(0) || negatives.keep.size(1) != b.size(0)) {
      throw ArgumentError("instance_contrastive_loss: keep-mask must be N x K");
    }
    neg = neg.masked_fill(negatives.keep.logical_not(), -std::numeric_limits<double>::infinity());
  }
  const auto logits = torch::cat({pos, neg}, 1);
  return (torch::logsumexp(logits, 1) - pos.squeeze(1)).mean();
}

torch::Tensor cluster_consistency_loss(const torch::Tensor& c_p, const torch::Tensor& c_q, Temperature tau) {
  if (c_p.dim() != 2 || c_p.sizes() != c_q.sizes()) {
    throw ArgumentError("cluster_consistency_loss: C_p and C_q must be N x M matrices of equal shape");
  }
  if (c_p.size(1) < 2) throw ArgumentError("cluster_consistency_loss: need at least two clusters");
  require_nonzero_rows(c_p.t(), "C_p column");
  require_nonzero_rows(c_q.t(), "C_q column");
  const auto p = c_p / c_p.norm(2, 0, /*keepdim=*/true);
  const auto q = c_q / c_q.norm(2, 0, /*keepdim=*/true);
  // sim[i][j] = s(c_p^i, c_q^j); the positive is the diagonal and every
  // off-diagonal column of the row is a negative.
  const auto sim = p.t().mm(q) / tau.value();
  return (torch::logsumexp(sim, 1) - sim.diagonal()).mean();
}

torch::Tensor overall_loss(const torch::Tensor& l_hand, const torch::Tensor& l_inst, const torch::Tensor& l_clust,
                           const LossWeights& w) {
  w.validate();
  return w.alpha * l_hand + w.beta * l_inst + w.gamma * l_clust;
}

double overall_loss(double l_hand, double l_inst, double l_clust, const LossWeights& w) {
  w.validate();
  return w.alpha * l_hand + w.beta * l_inst + w.gamma * l_clust;
}

}  // namespace dcpnet
