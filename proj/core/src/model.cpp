#include "dcpnet/model.hpp"

#include <cstring>

#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(BackboneFamily family) {
  switch (family) {
    case BackboneFamily::resnet_tiny: return "resnet_tiny";
    case BackboneFamily::resnet18: return "resnet18";
    case BackboneFamily::resnet34: return "resnet34";
    case BackboneFamily::resnet50: return "resnet50";
  }
  return "unknown";
}

BackboneFamily parse_backbone(std::string_view name) {
  if (name == "resnet_tiny") return BackboneFamily::resnet_tiny;
  if (name == "resnet18") return BackboneFamily::resnet18;
  if (name == "resnet34") return BackboneFamily::resnet34;
  if (name == "resnet50") return BackboneFamily::resnet50;
  throw ConfigError("model.backbone: unsupported backbone '" + std::string(name) +
                    "' (expected resnet_tiny, resnet18, resnet34 or resnet50)");
}

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(false));
}

struct StagePlan {
  bool bottleneck;
  std::vector<int> depths;
  std::vector<std::int64_t> widths;
  std::vector<std::int64_t> strides;
};

StagePlan plan_for(BackboneFamily family) {
  switch (family) {
    case BackboneFamily::resnet_tiny: return {false, {1, 1, 1}, {32, 64, 128}, {2, 2, 2}};
    case BackboneFamily::resnet18: return {false, {2, 2, 2, 2}, {64, 128, 256, 512}, {1, 2, 2, 2}};
    case BackboneFamily::resnet34: return {false, {3, 4, 6, 3}, {64, 128, 256, 512}, {1, 2, 2, 2}};
    case BackboneFamily::resnet50: return {true, {3, 4, 6, 3}, {64, 128, 256, 512}, {1, 2, 2, 2}};
  }
  throw ConfigError("model.backbone: unsupported backbone");
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(std::int64_t in_channels, std::int64_t width, std::int64_t stride,
                                     bool bottleneck) {
  body_ = nn::Sequential();
  if (bottleneck) {
    out_channels_ = width * 4;
    body_->push_back(conv(in_channels, width, 1, 1));
    body_->push_back(nn::BatchNorm2d(width));
    body_->push_back(nn::ReLU());
    body_->push_back(conv(width, width, 3, stride));
    body_->push_back(nn::BatchNorm2d(width));
    body_->push_back(nn::ReLU());
    body_->push_back(conv(width, out_channels_, 1, 1));
    body_->push_back(nn::BatchNorm2d(out_channels_));
  } else {
    out_channels_ = width;
    body_->push_back(conv(in_channels, width, 3, stride));
    body_->push_back(nn::BatchNorm2d(width));
    body_->push_back(nn::ReLU());
    body_->push_back(conv(width, width, 3, 1));
    body_->push_back(nn::BatchNorm2d(width));
  }
  register_module("body", body_);
  shortcut_ = nn::Sequential();
  if (stride != 1 || in_channels != out_channels_) {
    shortcut_->push_back(conv(in_channels, out_channels_, 1, stride));
    shortcut_->push_back(nn::BatchNorm2d(out_channels_));
  }
  register_module("shortcut", shortcut_);
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto identity = shortcut_->is_empty() ? x : shortcut_->forward(x);
  return torch::relu(body_->forward(x) + identity);
}

BackboneImpl::BackboneImpl(BackboneFamily family) {
  const StagePlan plan = plan_for(family);
  stem_ = nn::Sequential();
  std::int64_t channels = plan.widths.front();
  if (family == BackboneFamily::resnet_tiny) {
    stem_->push_back(conv(1, channels, 3, 1));
    stem_->push_back(nn::BatchNorm2d(channels));
    stem_->push_back(nn::ReLU());
  } else {
    stem_->push_back(conv(1, channels, 7, 2));
    stem_->push_back(nn::BatchNorm2d(channels));
    stem_->push_back(nn::ReLU());
    stem_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1)));
  }
  register_module("stem", stem_);

  stages_ = nn::Sequential();
  for (std::size_t s = 0; s < plan.depths.size(); ++s) {
    for (int b = 0; b < plan.depths[s]; ++b) {
      ResidualBlock block(channels, plan.widths[s], b == 0 ? plan.strides[s] : 1, plan.bottleneck);
      channels = block->out_channels();
      stages_->push_back(block);
    }
  }
  register_module("stages", stages_);
  feature_dim_ = channels;

  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* c = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
    }
  }
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& x) {
  auto h = stages_->forward(stem_->forward(x));
  return F::adaptive_avg_pool2d(h, F::AdaptiveAvgPool2dFuncOptions(1)).flatten(1);
}

MlpHeadImpl::MlpHeadImpl(std::int64_t in, std::int64_t hidden, std::int64_t out)
    : fc1_(register_module("fc1", nn::Linear(in, hidden))),
      bn_(register_module("bn", nn::BatchNorm1d(hidden))),
      fc2_(register_module("fc2", nn::Linear(hidden, out))) {}

torch::Tensor MlpHeadImpl::forward(const torch::Tensor& x) {
  return fc2_->forward(torch::relu(bn_->forward(fc1_->forward(x))));
}

BranchImpl::BranchImpl(const EncoderSpec& spec)
    : backbone_(register_module("backbone", Backbone(spec.backbone))),
      projector_(register_module("projector",
                                 MlpHead(backbone_->feature_dim(), backbone_->feature_dim(), spec.projection_dim))) {}

torch::Tensor BranchImpl::forward(const torch::Tensor& x) { return projector_->forward(backbone_->forward(x)); }

bool ModelState::initialized() const {
  return !online.is_empty() && !target.is_empty() && !predictor.is_empty() && !classifier.is_empty() &&
         num_classes >= 2;
}

void copy_module_state(const nn::Module& src, nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters(true);
  auto dst_params = dst.named_parameters(true);
  if (src_params.size() != dst_params.size()) throw StateError("copy_module_state: parameter count mismatch");
  for (auto& item : src_params) {
    auto* target = dst_params.find(item.key());
    if (target == nullptr || target->sizes() != item.value().sizes()) {
      throw StateError("copy_module_state: parameter '" + item.key() + "' does not match");
    }
    target->copy_(item.value());
  }
  auto src_buffers = src.named_buffers(true);
  auto dst_buffers = dst.named_buffers(true);
  for (auto& item : src_buffers) {
    auto* target = dst_buffers.find(item.key());
    if (target == nullptr || target->sizes() != item.value().sizes()) {
      throw StateError("copy_module_state: buffer '" + item.key() + "' does not match");
    }
    target->copy_(item.value());
  }
}

ModelState ModelState::clone() const {
  if (!initialized()) throw StateError("cannot clone an uninitialized model");
  ModelState copy;
  copy.spec = spec;
  copy.num_classes = num_classes;
  copy.momentum = momentum;
  copy.online = Branch(spec);
  copy.target = Branch(spec);
  copy.predictor = MlpHead(spec.projection_dim, spec.feature_dim, spec.projection_dim);
  copy.classifier = nn::Linear(spec.projection_dim, num_classes);
  copy_module_state(*online, *copy.online);
  copy_module_state(*target, *copy.target);
  copy_module_state(*predictor, *copy.predictor);
  copy_module_state(*classifier, *copy.classifier);
  for (auto& p : copy.target->parameters()) p.set_requires_grad(false);
  copy.online->train(online->is_training());
  copy.target->train(target->is_training());
  return copy;
}

std::vector<torch::Tensor> ModelState::trainable_parameters() const {
  std::vector<torch::Tensor> params = online->parameters();
  for (auto& p : predictor->parameters()) params.push_back(p);
  for (auto& p : classifier->parameters()) params.push_back(p);
  return params;
}

ModelState init_model(EncoderSpec spec, std::int64_t num_classes, std::uint64_t seed, double momentum) {
  if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("model.ema_momentum must lie in [0, 1]");
  if (spec.projection_dim < 1) throw ConfigError("model.projection_dim must be positive");
  torch::manual_seed(seed);

  ModelState state;
  state.num_classes = num_classes;
  state.momentum = momentum;
  // The width is read off the built trunk rather than a lookup table.
  Backbone probe(spec.backbone);
  spec.feature_dim = probe->feature_dim();
  if (spec.projection_dim > spec.feature_dim) {
    throw ConfigError("model.projection_dim (" + std::to_string(spec.projection_dim) +
                      ") exceeds the backbone feature width (" + std::to_string(spec.feature_dim) + ")");
  }
  state.spec = spec;

  torch::manual_seed(seed);
  state.online = Branch(spec);
  state.target = Branch(spec);
  copy_module_state(*state.online, *state.target);
  for (auto& p : state.target->parameters()) p.set_requires_grad(false);
  state.predictor = MlpHead(spec.projection_dim, spec.feature_dim, spec.projection_dim);
  state.classifier = nn::Linear(spec.projection_dim, num_classes);
  return state;
}

void momentum_update(ModelState& state) {
  if (!state.initialized()) throw StateError("momentum_update: model is not initialized");
  torch::NoGradGuard no_grad;
  const double m = state.momentum;
  auto online = state.online->named_parameters(true);
  auto target = state.target->named_parameters(true);
  if (online.size() != target.size()) throw StateError("momentum_update: parameter count mismatch");
  for (auto& item : online) {
    auto* t = target.find(item.key());
    if (t == nullptr || t->sizes() != item.value().sizes()) {
      throw StateError("momentum_update: shape mismatch for '" + item.key() + "'");
    }
    if (m == 1.0) continue;
    if (m == 0.0) {
      t->copy_(item.value());
    } else {
      t->mul_(m).add_(item.value(), 1.0 - m);
    }
  }
}

torch::Tensor to_batch_tensor(std::span<const ImageChip* const> chips) {
  if (chips.empty()) throw ArgumentError("to_batch_tensor: empty batch");
  const int h = chips.front()->height();
  const int w = chips.front()->width();
  auto out = torch::empty({static_cast<std::int64_t>(chips.size()), 1, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const ImageChip* chip : chips) {
    if (chip->height() != h || chip->width() != w) throw DimensionError("to_batch_tensor: chips differ in size");
    std::memcpy(dst, chip->pixels().data(), chip->pixels().size_bytes());
    dst += chip->size();
  }
  return out;
}

torch::Tensor to_batch_tensor(std::span<const ImageChip> chips) {
  std::vector<const ImageChip*> ptrs;
  ptrs.reserve(chips.size());
  for (const auto& c : chips) ptrs.push_back(&c);
  return to_batch_tensor(std::span<const ImageChip* const>(ptrs));
}

ForwardOutputs forward_views(ModelState& state, std::span<const ViewTriple> batch, ForwardMode mode) {
  if (!state.initialized()) throw StateError("forward_views: model is not initialized");
  if (batch.empty()) throw ArgumentError("forward_views: empty batch");
  const bool training = mode == ForwardMode::train;
  state.online->train(training);
  state.target->train(training);
  state.predictor->train(training);
  state.classifier->train(training);

  std::vector<const ImageChip*> weak, strong, hand;
  for (const auto& v : batch) {
    weak.push_back(&v.weak);
    strong.push_back(&v.strong);
    hand.push_back(&v.handcrafted);
  }
  const auto norm = F::NormalizeFuncOptions().dim(1);

  ForwardOutputs out;
  const auto proj_w = state.online->forward(to_batch_tensor(std::span<const ImageChip* const>(weak)));
  out.z_w = F::normalize(proj_w, norm);
  out.z_pred = F::normalize(state.predictor->forward(proj_w), norm);
  {
    torch::NoGradGuard no_grad;
    out.z_s = F::normalize(state.target->forward(to_batch_tensor(std::span<const ImageChip* const>(strong))), norm);
    out.x_h = F::normalize(state.target->forward(to_batch_tensor(std::span<const ImageChip* const>(hand))), norm);
  }
  out.class_probs_w = torch::softmax(state.classifier->forward(out.z_w), 1);
  out.class_probs_s = torch::softmax(state.classifier->forward(out.z_s), 1);
  out.cluster_dists[ViewKind::weak] = out.class_probs_w;
  out.cluster_dists[ViewKind::strong] = out.class_probs_s;
  out.cluster_dists[ViewKind::handcrafted] = torch::softmax(state.classifier->forward(out.x_h), 1);
  return out;
}

torch::Tensor encode_features(Backbone& backbone, std::span<const ImageChip> chips, std::int64_t batch_size) {
  if (chips.empty()) throw ArgumentError("encode_features: no chips");
  torch::NoGradGuard no_grad;
  const bool was_training = backbone->is_training();
  backbone->eval();
  std::vector<torch::Tensor> parts;
  for (std::size_t start = 0; start < chips.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(batch_size), chips.size() - start);
    parts.push_back(backbone->forward(to_batch_tensor(chips.subspan(start, count))));
  }
  backbone->train(was_training);
  return torch::cat(parts, 0);
}

std::uint64_t parameter_checksum(const nn::Module& module, bool include_buffers) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const torch::Tensor& t) {
    const auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : module.parameters(true)) mix(p);
  if (include_buffers) {
    for (const auto& b : module.buffers(true)) mix(b);
  }
  return h;
}

}  // namespace dcpnet
