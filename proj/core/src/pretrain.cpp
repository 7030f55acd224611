#include "dcpnet/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dcpnet/errors.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
constexpr std::uint64_t kViewStream = 0x56494557ull;
constexpr std::uint64_t kCollectStream = 0x434f4c4cull;

std::vector<double> row_of(const torch::TensorAccessor<double, 2>& acc, std::int64_t row, std::int64_t cols) {
  std::vector<double> v(static_cast<std::size_t>(cols));
  for (std::int64_t j = 0; j < cols; ++j) v[static_cast<std::size_t>(j)] = acc[row][j];
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  loss_weights.validate();
  if (!(tau > 0.0)) throw ConfigError("train.tau must be positive");
  if (!(fnse.threshold > 0.0 && fnse.threshold < 1.0)) throw ConfigError("train.fnse.threshold must lie in (0, 1)");
  if (!(fnse.c >= 0.0 && fnse.c <= 1.0)) throw ConfigError("train.fnse.c must lie in [0, 1]");
  augment.validate();
  hog.validate();
  effective_weights();
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = loss_weights;
  if (!ablation.hand_task) w.alpha = 0.0;
  if (!ablation.cluster_task) w.gamma = 0.0;
  const double total = w.alpha + w.beta + w.gamma;
  if (!(total > 0.0)) throw ConfigError("train.loss_weights: every active loss has zero weight");
  w.alpha /= total;
  w.beta /= total;
  w.gamma /= total;
  return w;
}

std::vector<PseudoLabelRecord> update_pseudo_labels(const torch::Tensor& class_probs_w,
                                                    const torch::Tensor& class_probs_s, double c) {
  if (class_probs_w.dim() != 2 || class_probs_w.sizes() != class_probs_s.sizes()) {
    throw ArgumentError("update_pseudo_labels: weak and strong probabilities must be aligned N x M matrices");
  }
  const auto pw = class_probs_w.detach().to(torch::kFloat64).contiguous();
  const auto ps = class_probs_s.detach().to(torch::kFloat64).contiguous();
  const auto aw = pw.accessor<double, 2>();
  const auto as = ps.accessor<double, 2>();
  const auto m = pw.size(1);
  std::vector<PseudoLabelRecord> records;
  records.reserve(static_cast<std::size_t>(pw.size(0)));
  for (std::int64_t i = 0; i < pw.size(0); ++i) {
    const auto w = row_of(aw, i, m);
    const auto s = row_of(as, i, m);
    records.push_back(blend_pseudo_probs(w, s, c));
  }
  return records;
}

PretrainSession::PretrainSession(ModelState state, TrainConfig cfg, std::span<const ImageChip> data,
                                 std::uint64_t seed)
    : state_(std::move(state)), cfg_(std::move(cfg)), data_(data.begin(), data.end()), seed_(seed) {
  cfg_.validate();
  if (!state_.initialized()) throw StateError("PretrainSession: model is not initialized");
  if (data_.size() < 2) throw ArgumentError("pretraining needs at least two chips");
  handcrafted_.reserve(data_.size());
  for (const auto& chip : data_) handcrafted_.push_back(handcrafted_transform(chip, cfg_.hog));
  optimizer_ = std::make_unique<torch::optim::SGD>(
      state_.trainable_parameters(),
      torch::optim::SGDOptions(cfg_.learning_rate).momentum(cfg_.momentum).weight_decay(cfg_.weight_decay));
}

std::vector<std::vector<std::size_t>> PretrainSession::epoch_batches(int epoch) const {
  std::vector<std::size_t> order(data_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng({seed_, static_cast<std::uint64_t>(epoch), kShuffleStream});
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)));
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const auto end = std::min(order.size(), start + bs);
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    // Batch norm needs two samples; a trailing singleton joins the previous batch.
    if (batch.size() < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), batch.begin(), batch.end());
    } else {
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

std::vector<ViewTriple> PretrainSession::views_for(std::span<const std::size_t> indices, int epoch,
                                                   std::uint64_t stream) const {
  std::vector<ViewTriple> views;
  views.reserve(indices.size());
  for (auto idx : indices) {
    Rng rng = make_rng({seed_, cfg_.augment.seed, static_cast<std::uint64_t>(epoch), idx, stream});
    views.push_back(make_views(data_[idx], handcrafted_[idx], cfg_.augment, rng));
  }
  return views;
}

void PretrainSession::collect_pass(int epoch, torch::Tensor& features, std::vector<PseudoLabelRecord>& records) {
  torch::NoGradGuard no_grad;
  const auto n = static_cast<std::int64_t>(data_.size());
  features = torch::zeros({n, state_.spec.projection_dim});
  records.assign(data_.size(), {});
  std::vector<std::size_t> all(data_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto bs = static_cast<std::size_t>(std::max(cfg_.batch_size, 2));
  for (std::size_t start = 0; start < all.size(); start += bs) {
    auto end = std::min(all.size(), start + bs);
    if (all.size() - end == 1) end = all.size();
    const std::span<const std::size_t> idx(all.data() + start, end - start);
    const auto views = views_for(idx, epoch, kCollectStream);
    const auto out = forward_views(state_, views, ForwardMode::train);
    const auto recs = update_pseudo_labels(out.class_probs_w, out.class_probs_s, cfg_.fnse.c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      features[static_cast<std::int64_t>(idx[i])].copy_(out.z_s[static_cast<std::int64_t>(i)]);
      records[idx[i]] = recs[i];
    }
    if (end == all.size()) break;
  }
}

MemoryBank PretrainSession::bootstrap_bank() {
  torch::Tensor features;
  std::vector<PseudoLabelRecord> records;
  collect_pass(0, features, records);
  return rebuild_bank(features, uniform_records(features.size(0), static_cast<int>(state_.num_classes)), 0);
}

EpochOutput PretrainSession::train_epoch(int epoch, const MemoryBank* bank) {
  if (epoch < 1) throw ArgumentError("train_epoch: epochs are numbered from 1");
  if (bank != nullptr && bank->size() > 0) {
    if (bank->dim() != state_.spec.projection_dim) {
      throw StateError("train_epoch: bank feature dimension " + std::to_string(bank->dim()) +
                       " does not match projection_dim " + std::to_string(state_.spec.projection_dim));
    }
    if (cfg_.exclude_self_negative && bank->size() != static_cast<std::int64_t>(data_.size())) {
      throw StateError("train_epoch: bank size does not match the dataset");
    }
  }
  const bool use_bank = bank != nullptr && bank->size() > 0;
  const bool fnse_active = cfg_.fnse.enabled && use_bank && bank->has_pseudo_labels();

  double lr = cfg_.learning_rate;
  if (cfg_.cosine_schedule) {
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * (epoch - 1) / static_cast<double>(cfg_.epochs)));
  }
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
  }

  const LossWeights weights = cfg_.effective_weights();
  const Temperature tau(cfg_.tau);
  const bool collect_in_flight = cfg_.pseudo_label_source == PseudoLabelSource::in_flight;

  EpochOutput result;
  result.report.epoch = epoch;
  result.report.learning_rate = lr;
  result.report.weights = weights;
  if (collect_in_flight) {
    result.features = torch::zeros({static_cast<std::int64_t>(data_.size()), state_.spec.projection_dim});
    result.records.assign(data_.size(), {});
  }

  std::int64_t candidates = 0;
  std::int64_t eliminated = 0;
  const auto batches = epoch_batches(epoch);
  for (const auto& batch : batches) {
    const auto views = views_for(batch, epoch, kViewStream);
    const ForwardOutputs out = forward_views(state_, views, ForwardMode::train);
    const auto anchors = update_pseudo_labels(out.class_probs_w, out.class_probs_s, cfg_.fnse.c);

    NegativePool pool;
    if (use_bank) {
      std::vector<std::vector<std::int64_t>> kept(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (fnse_active) {
          kept[i] = filter_negatives(anchors[i], *bank, cfg_.fnse.threshold);
        } else {
          kept[i].resize(static_cast<std::size_t>(bank->size()));
          for (std::int64_t j = 0; j < bank->size(); ++j) kept[i][static_cast<std::size_t>(j)] = j;
        }
        candidates += bank->size();
        eliminated += bank->size() - static_cast<std::int64_t>(kept[i].size());
        if (cfg_.exclude_self_negative) {
          const auto self = static_cast<std::int64_t>(batch[i]);
          std::erase(kept[i], self);
        }
      }
      pool = NegativePool::from_indices(bank->features, kept);
    }

    const auto l_inst = instance_contrastive_loss(out.z_w, out.z_s, pool, tau);
    const auto l_hand = cfg_.ablation.direct_contrast_mode
                            ? instance_contrastive_loss(out.z_w, out.x_h, pool, tau)
                            : hand_prediction_loss(out.z_pred, out.x_h);
    const auto& cd = out.cluster_dists;
    const auto l_clust = (cluster_consistency_loss(cd.at(ViewKind::weak), cd.at(ViewKind::strong), tau) +
                          cluster_consistency_loss(cd.at(ViewKind::weak), cd.at(ViewKind::handcrafted), tau) +
                          cluster_consistency_loss(cd.at(ViewKind::strong), cd.at(ViewKind::handcrafted), tau)) /
                         3.0;
    const auto total = overall_loss(l_hand, l_inst, l_clust, weights);

    optimizer_->zero_grad();
    total.backward();
    optimizer_->step();
    momentum_update(state_);

    BatchLosses bl;
    bl.hand = l_hand.item<double>();
    bl.inst = l_inst.item<double>();
    bl.clust = l_clust.item<double>();
    bl.overall = total.item<double>();
    result.batches.push_back(bl);

    if (collect_in_flight) {
      for (std::size_t i = 0; i < batch.size(); ++i) {
        result.features[static_cast<std::int64_t>(batch[i])].copy_(out.z_s[static_cast<std::int64_t>(i)]);
        result.records[batch[i]] = anchors[i];
      }
    }
  }

  if (!collect_in_flight) collect_pass(epoch, result.features, result.records);

  const double nb = static_cast<double>(result.batches.size());
  for (const auto& b : result.batches) {
    result.report.mean_loss_hand += b.hand / nb;
    result.report.mean_loss_inst += b.inst / nb;
    result.report.mean_loss_clust += b.clust / nb;
    result.report.mean_loss_overall += b.overall / nb;
  }
  result.report.eliminated_fraction = candidates > 0 ? static_cast<double>(eliminated) / candidates : 0.0;
  result.report.bank_size = static_cast<std::int64_t>(data_.size());
  return result;
}

PretrainResult run_pretraining(const TrainConfig& cfg, const ModelConfig& model, std::span<const ImageChip> data,
                               std::uint64_t seed, const EpochCallback& on_epoch) {
  if (data.empty()) throw ArgumentError("run_pretraining: empty dataset");
  cfg.validate();
  PretrainSession session(init_model(model, seed), cfg, data, seed);
  MemoryBank bank = session.bootstrap_bank();
  PretrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochOutput out = session.train_epoch(epoch, &bank);
    bank = rebuild_bank(out.features, std::move(out.records), epoch);
    out.report.bank_size = bank.size();
    result.reports.push_back(out.report);
    if (on_epoch) on_epoch(out.report, session.state(), bank);
  }
  result.state = std::move(session.state());
  result.bank = std::move(bank);
  return result;
}

}  // namespace dcpnet
