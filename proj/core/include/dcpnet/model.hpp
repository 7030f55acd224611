#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dcpnet/augment.hpp"
#include "dcpnet/image.hpp"

namespace dcpnet {

/// resnet_tiny is a three-stage, narrow basic-block ResNet for desk-scale runs.
enum class BackboneFamily { resnet_tiny, resnet18, resnet34, resnet50 };

std::string to_string(BackboneFamily family);
BackboneFamily parse_backbone(std::string_view name);

struct EncoderSpec {
  BackboneFamily backbone = BackboneFamily::resnet18;
  std::int64_t feature_dim = 0;  // backbone output width, filled in by init_model
  std::int64_t projection_dim = 128;

  bool operator==(const EncoderSpec&) const = default;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(std::int64_t in_channels, std::int64_t width, std::int64_t stride, bool bottleneck);
  torch::Tensor forward(const torch::Tensor& x);
  std::int64_t out_channels() const { return out_channels_; }

 private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Sequential shortcut_{nullptr};
  std::int64_t out_channels_;
};
TORCH_MODULE(ResidualBlock);

/// Single-channel ResNet trunk with global average pooling.
class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(BackboneFamily family);
  torch::Tensor forward(const torch::Tensor& x);  // [N, 1, H, W] -> [N, feature_dim]
  std::int64_t feature_dim() const { return feature_dim_; }

 private:
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential stages_{nullptr};
  std::int64_t feature_dim_ = 0;
};
TORCH_MODULE(Backbone);

/// Linear -> BatchNorm -> ReLU -> Linear.
class MlpHeadImpl : public torch::nn::Module {
 public:
  MlpHeadImpl(std::int64_t in, std::int64_t hidden, std::int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear fc1_{nullptr};
  torch::nn::BatchNorm1d bn_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(MlpHead);

/// Backbone followed by the projector. One instance per encoder.
class BranchImpl : public torch::nn::Module {
 public:
  explicit BranchImpl(const EncoderSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);  // raw projection
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }

 private:
  Backbone backbone_{nullptr};
  MlpHead projector_{nullptr};
};
TORCH_MODULE(Branch);

/// Everything needed to build a ModelState.
struct ModelConfig {
  EncoderSpec encoder;
  std::int64_t num_classes = 0;  // 0: take it from the dataset
  double ema_momentum = 0.999;

  bool operator==(const ModelConfig&) const = default;
};

struct ModelState {
  EncoderSpec spec;
  std::int64_t num_classes = 0;
  double momentum = 0.999;
  Branch online{nullptr};      // theta_w: updated by the optimizer
  Branch target{nullptr};      // theta_s: updated only by momentum_update
  MlpHead predictor{nullptr};  // psi
  torch::nn::Linear classifier{nullptr};

  bool initialized() const;
  /// Deep copy of every parameter and buffer.
  ModelState clone() const;
  /// Parameters the optimizer may touch: online branch, predictor, classifier.
  std::vector<torch::Tensor> trainable_parameters() const;
};

/// Builds a model; the target branch starts as an exact copy of the online branch.
/// Throws ConfigError when projection_dim exceeds the backbone width or M < 2.
ModelState init_model(EncoderSpec spec, std::int64_t num_classes, std::uint64_t seed, double momentum = 0.999);
inline ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
  return init_model(cfg.encoder, cfg.num_classes, seed, cfg.ema_momentum);
}

/// theta_s <- m * theta_s + (1 - m) * theta_w for every paired parameter.
void momentum_update(ModelState& state);

enum class ForwardMode { train, eval };
enum class ViewKind { weak, strong, handcrafted };

struct ForwardOutputs {
  torch::Tensor z_w;     // online projection of the weak view (unit rows)
  torch::Tensor z_s;     // target projection of the strong view (unit rows, no grad)
  torch::Tensor x_h;     // target projection of the handcrafted view (unit rows, no grad)
  torch::Tensor z_pred;  // predictor output on the weak view (unit rows)
  std::map<ViewKind, torch::Tensor> cluster_dists;  // N x M softmax assignments
  torch::Tensor class_probs_w;
  torch::Tensor class_probs_s;
};

ForwardOutputs forward_views(ModelState& state, std::span<const ViewTriple> batch, ForwardMode mode);

/// Stacks chips into a float32 [N, 1, H, W] tensor.
torch::Tensor to_batch_tensor(std::span<const ImageChip> chips);
torch::Tensor to_batch_tensor(std::span<const ImageChip* const> chips);

/// Backbone features of `chips` in eval mode, computed without gradient.
torch::Tensor encode_features(Backbone& backbone, std::span<const ImageChip> chips, std::int64_t batch_size = 64);

/// FNV-1a over parameter bytes (and buffers when requested) in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module, bool include_buffers = false);

/// Copies parameters and buffers between modules of identical structure.
void copy_module_state(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace dcpnet
