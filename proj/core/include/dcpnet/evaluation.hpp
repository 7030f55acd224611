#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "dcpnet/dataset.hpp"
#include "dcpnet/model.hpp"

namespace dcpnet {

enum class ProtocolKind { knn, ft1, ft2, ftall };

std::string to_string(ProtocolKind kind);
ProtocolKind parse_protocol(std::string_view name);

struct EvalProtocol {
  ProtocolKind kind = ProtocolKind::knn;
  int k = 45;           // knn
  int epochs = 100;     // fine-tuning
  int runs = 1;
  double knn_tau = 0.07;
  bool majority_vote = false;  // knn: plain counting instead of exp(sim / tau) weights
  double learning_rate = 1e-3;
  int batch_size = 32;

  void validate() const;
  bool operator==(const EvalProtocol&) const = default;
};

using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;  // [true][predicted]

struct EvalResult {
  double accuracy_mean = 0.0;  // percent
  double accuracy_std = 0.0;   // percent, population std over runs
  std::vector<double> per_class_accuracy;  // percent, mean over runs
  ConfusionMatrix confusion;               // first run
  std::vector<double> run_accuracies;
  std::vector<ConfusionMatrix> run_confusions;
};

/// Labeled feature bank with unit-norm rows.
struct KnnBank {
  torch::Tensor features;  // K x d
  std::vector<int> labels;
  int num_classes = 0;

  static KnnBank from_features(const torch::Tensor& features, std::vector<int> labels, int num_classes);
  std::int64_t size() const { return features.defined() ? features.size(0) : 0; }
};

/// Class with the largest vote among the k most cosine-similar bank entries.
/// Similarity ties favor the lower bank index, vote ties the lower class.
int knn_classify(const torch::Tensor& query, const KnnBank& bank, int k, double tau, bool majority_vote = false);

/// Accuracy (percent) and confusion for one set of predictions.
double accuracy_percent(const ConfusionMatrix& confusion);
ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes);
/// Folds per-run outcomes into mean, population std and per-class accuracy.
EvalResult aggregate_runs(std::vector<ConfusionMatrix> confusions);

/// KNN protocol: bank from the training split, queries from the test split, online backbone features.
EvalResult knn_evaluate(const ModelState& state, const EvalProtocol& protocol, const SplitCollections& data);

enum class HeadKind { linear, mlp };

/// Classification head for fine-tuning: one linear layer, or Linear-BN-ReLU-Linear.
class ClassifierHeadImpl : public torch::nn::Module {
 public:
  ClassifierHeadImpl(HeadKind kind, std::int64_t in, std::int64_t num_classes);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ClassifierHead);

/// Trains a head on fixed features with cross-entropy (Adam, shuffled minibatches).
ClassifierHead train_head_on_features(HeadKind kind, const torch::Tensor& features, const std::vector<int>& labels,
                                      int num_classes, int epochs, double learning_rate, int batch_size,
                                      std::uint64_t seed);
std::vector<int> predict_with_head(ClassifierHead& head, const torch::Tensor& features);

struct FineTuneRun {
  ConfusionMatrix confusion;
  std::uint64_t encoder_checksum_before = 0;
  std::uint64_t encoder_checksum_after = 0;
};

/// One fine-tuning run on `encoder`, which is modified in place under ftall only.
FineTuneRun fine_tune_once(Backbone& encoder, const EvalProtocol& protocol, const SplitCollections& data,
                           std::uint64_t seed);

/// Runs protocol.runs independent fine-tunes, each on a fresh copy of the online encoder.
EvalResult fine_tune(const ModelState& state, const EvalProtocol& protocol, const SplitCollections& data,
                     std::uint64_t seed);

struct ProtocolResult {
  EvalProtocol protocol;
  EvalResult result;
};

/// One result per protocol entry, in order; duplicates are evaluated again.
std::vector<ProtocolResult> evaluate_suite(const ModelState& state, const std::vector<EvalProtocol>& protocols,
                                           const SplitCollections& data, std::uint64_t seed);

/// CSV with columns kind,param,mean,std (param is k for knn, epochs otherwise).
void write_results_table(const std::string& path, const std::vector<ProtocolResult>& results);
void write_confusion(const std::string& path, const ConfusionMatrix& confusion);

}  // namespace dcpnet
