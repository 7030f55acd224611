#include "dcpnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "dcpnet/errors.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet {

namespace nn = torch::nn;

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::knn: return "knn";
    case ProtocolKind::ft1: return "ft1";
    case ProtocolKind::ft2: return "ft2";
    case ProtocolKind::ftall: return "ftall";
  }
  return "unknown";
}

ProtocolKind parse_protocol(std::string_view name) {
  if (name == "knn") return ProtocolKind::knn;
  if (name == "ft1") return ProtocolKind::ft1;
  if (name == "ft2") return ProtocolKind::ft2;
  if (name == "ftall") return ProtocolKind::ftall;
  throw ConfigError("eval.kind: unknown protocol '" + std::string(name) + "' (expected knn, ft1, ft2 or ftall)");
}

void EvalProtocol::validate() const {
  if (k < 1) throw ConfigError("eval.k must be >= 1");
  if (runs < 1) throw ConfigError("eval.runs must be >= 1");
  if (epochs < 1) throw ConfigError("eval.epochs must be >= 1");
  if (!(knn_tau > 0.0)) throw ConfigError("eval.knn_tau must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("eval.learning_rate must be positive");
  if (batch_size < 2) throw ConfigError("eval.batch_size must be >= 2");
}

KnnBank KnnBank::from_features(const torch::Tensor& features, std::vector<int> labels, int num_classes) {
  if (features.dim() != 2 || features.size(0) != static_cast<std::int64_t>(labels.size())) {
    throw ArgumentError("KnnBank: features must be K x d with one label per row");
  }
  for (int l : labels) {
    if (l < 0 || l >= num_classes) throw ArgumentError("KnnBank: label out of range");
  }
  const auto f = features.detach().to(torch::kFloat64);
  KnnBank bank;
  bank.features = (f / f.norm(2, 1, true).clamp_min(1e-12)).contiguous();
  bank.labels = std::move(labels);
  bank.num_classes = num_classes;
  return bank;
}

int knn_classify(const torch::Tensor& query, const KnnBank& bank, int k, double tau, bool majority_vote) {
  const auto n = bank.size();
  if (k < 1) throw ArgumentError("knn_classify: k must be >= 1");
  if (k > n) throw ArgumentError("knn_classify: k = " + std::to_string(k) + " exceeds bank size " + std::to_string(n));
  if (!(tau > 0.0)) throw ArgumentError("knn_classify: tau must be positive");
  auto q = query.detach().to(torch::kFloat64).flatten();
  if (q.size(0) != bank.features.size(1)) throw ArgumentError("knn_classify: query dimension mismatch");
  const double qn = q.norm().item<double>();
  if (!(qn > 0.0)) throw DegenerateInputError("knn_classify: zero query vector");
  q = q / qn;
  const auto sims_t = bank.features.to(torch::kFloat64).mv(q).contiguous();
  const double* sims = sims_t.data_ptr<double>();

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto closer = [sims](std::int64_t a, std::int64_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);

  std::vector<double> votes(static_cast<std::size_t>(bank.num_classes), 0.0);
  for (int i = 0; i < k; ++i) {
    const auto j = order[static_cast<std::size_t>(i)];
    votes[static_cast<std::size_t>(bank.labels[static_cast<std::size_t>(j)])] +=
        majority_vote ? 1.0 : std::exp(sims[j] / tau);
  }
  int best = 0;
  for (int c = 1; c < bank.num_classes; ++c) {
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted, int num_classes) {
  if (truth.size() != predicted.size()) throw ArgumentError("confusion_matrix: length mismatch");
  ConfusionMatrix m(static_cast<std::size_t>(num_classes), std::vector<std::int64_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

double accuracy_percent(const ConfusionMatrix& confusion) {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    for (std::size_t j = 0; j < confusion[i].size(); ++j) {
      total += confusion[i][j];
      if (i == j) correct += confusion[i][j];
    }
  }
  return total > 0 ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

EvalResult aggregate_runs(std::vector<ConfusionMatrix> confusions) {
  if (confusions.empty()) throw ArgumentError("aggregate_runs: no runs");
  EvalResult r;
  const auto m = confusions.front().size();
  r.per_class_accuracy.assign(m, 0.0);
  for (const auto& c : confusions) {
    r.run_accuracies.push_back(accuracy_percent(c));
    for (std::size_t i = 0; i < m; ++i) {
      const auto support = std::accumulate(c[i].begin(), c[i].end(), std::int64_t{0});
      const double acc = support > 0 ? 100.0 * static_cast<double>(c[i][i]) / static_cast<double>(support) : 0.0;
      r.per_class_accuracy[i] += acc / static_cast<double>(confusions.size());
    }
  }
  const double runs = static_cast<double>(r.run_accuracies.size());
  r.accuracy_mean = std::accumulate(r.run_accuracies.begin(), r.run_accuracies.end(), 0.0) / runs;
  double var = 0.0;
  for (double a : r.run_accuracies) var += (a - r.accuracy_mean) * (a - r.accuracy_mean);
  r.accuracy_std = std::sqrt(var / runs);
  if (r.run_accuracies.size() == 1) r.accuracy_mean = r.run_accuracies.front();
  r.confusion = confusions.front();
  r.run_confusions = std::move(confusions);
  return r;
}

namespace {

void require_labeled(const SplitCollections& data) {
  if (data.train.chips.empty() || data.test.chips.empty()) {
    throw ArgumentError("evaluation needs non-empty labeled train and test splits");
  }
  if (!data.train.labeled() || !data.test.labeled()) throw ArgumentError("evaluation needs labeled data");
}

}  // namespace

EvalResult knn_evaluate(const ModelState& state, const EvalProtocol& protocol, const SplitCollections& data) {
  protocol.validate();
  require_labeled(data);
  if (!state.initialized()) throw StateError("knn_evaluate: model is not initialized");
  Backbone encoder = state.online->backbone();
  const int m = data.train.num_classes;
  const KnnBank bank = KnnBank::from_features(encode_features(encoder, data.train.chips), data.train.labels, m);
  const auto queries = encode_features(encoder, data.test.chips);
  std::vector<int> predicted;
  predicted.reserve(data.test.size());
  for (std::int64_t i = 0; i < queries.size(0); ++i) {
    predicted.push_back(knn_classify(queries[i], bank, protocol.k, protocol.knn_tau, protocol.majority_vote));
  }
  const auto confusion = confusion_matrix(data.test.labels, predicted, m);
  // Nothing in the protocol is random, so every run repeats the same outcome.
  return aggregate_runs(std::vector<ConfusionMatrix>(static_cast<std::size_t>(protocol.runs), confusion));
}

ClassifierHeadImpl::ClassifierHeadImpl(HeadKind kind, std::int64_t in, std::int64_t num_classes) {
  body_ = nn::Sequential();
  if (kind == HeadKind::linear) {
    body_->push_back(nn::Linear(in, num_classes));
  } else {
    body_->push_back(nn::Linear(in, in));
    body_->push_back(nn::BatchNorm1d(in));
    body_->push_back(nn::ReLU());
    body_->push_back(nn::Linear(in, num_classes));
  }
  register_module("body", body_);
}

torch::Tensor ClassifierHeadImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

namespace {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)))]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < n; s += static_cast<std::size_t>(batch_size)) {
    const auto e = std::min(n, s + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(s),
                               order.begin() + static_cast<std::ptrdiff_t>(e));
    if (b.size() < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), b.begin(), b.end());
    } else {
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

torch::Tensor index_tensor(const std::vector<std::size_t>& idx) {
  std::vector<std::int64_t> v(idx.begin(), idx.end());
  return torch::tensor(v, torch::kInt64);
}

torch::Tensor label_tensor(const std::vector<int>& labels) {
  std::vector<std::int64_t> v(labels.begin(), labels.end());
  return torch::tensor(v, torch::kInt64);
}

HeadKind head_for(ProtocolKind kind) { return kind == ProtocolKind::ft2 ? HeadKind::mlp : HeadKind::linear; }

}  // namespace

ClassifierHead train_head_on_features(HeadKind kind, const torch::Tensor& features, const std::vector<int>& labels,
                                      int num_classes, int epochs, double learning_rate, int batch_size,
                                      std::uint64_t seed) {
  if (features.size(0) == 0) throw ArgumentError("train_head_on_features: no training features");
  if (features.size(0) != static_cast<std::int64_t>(labels.size())) {
    throw ArgumentError("train_head_on_features: one label per feature row required");
  }
  torch::manual_seed(seed);
  ClassifierHead head(kind, features.size(1), num_classes);
  head->train();
  torch::optim::Adam opt(head->parameters(), torch::optim::AdamOptions(learning_rate));
  const auto x = features.detach().to(torch::kFloat32);
  const auto y = label_tensor(labels);
  Rng rng = make_rng({seed, 0x48454144ull});
  for (int e = 0; e < epochs; ++e) {
    for (const auto& b : shuffled_batches(labels.size(), batch_size, rng)) {
      const auto idx = index_tensor(b);
      const auto loss = torch::nn::functional::cross_entropy(head->forward(x.index_select(0, idx)), y.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  head->eval();
  return head;
}

std::vector<int> predict_with_head(ClassifierHead& head, const torch::Tensor& features) {
  torch::NoGradGuard no_grad;
  head->eval();
  const auto pred = head->forward(features.to(torch::kFloat32)).argmax(1).contiguous();
  std::vector<int> out(static_cast<std::size_t>(pred.size(0)));
  for (std::int64_t i = 0; i < pred.size(0); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(pred[i].item<std::int64_t>());
  return out;
}

FineTuneRun fine_tune_once(Backbone& encoder, const EvalProtocol& protocol, const SplitCollections& data,
                           std::uint64_t seed) {
  protocol.validate();
  if (protocol.kind == ProtocolKind::knn) throw ArgumentError("fine_tune: knn is not a fine-tuning protocol");
  require_labeled(data);
  const int m = data.train.num_classes;
  FineTuneRun run;
  run.encoder_checksum_before = parameter_checksum(*encoder, true);

  if (protocol.kind != ProtocolKind::ftall) {
    // Frozen encoder: features are fixed, so only the head sees gradient updates.
    const auto train_feats = encode_features(encoder, data.train.chips);
    auto head = train_head_on_features(head_for(protocol.kind), train_feats, data.train.labels, m, protocol.epochs,
                                       protocol.learning_rate, protocol.batch_size, seed);
    const auto predicted = predict_with_head(head, encode_features(encoder, data.test.chips));
    run.confusion = confusion_matrix(data.test.labels, predicted, m);
  } else {
    torch::manual_seed(seed);
    ClassifierHead head(HeadKind::linear, encoder->feature_dim(), m);
    std::vector<torch::Tensor> params = encoder->parameters();
    for (auto& p : head->parameters()) params.push_back(p);
    torch::optim::Adam opt(params, torch::optim::AdamOptions(protocol.learning_rate));
    const auto x = to_batch_tensor(data.train.chips);
    const auto y = label_tensor(data.train.labels);
    Rng rng = make_rng({seed, 0x46544c4cull});
    encoder->train();
    head->train();
    for (int e = 0; e < protocol.epochs; ++e) {
      for (const auto& b : shuffled_batches(data.train.size(), protocol.batch_size, rng)) {
        const auto idx = index_tensor(b);
        const auto logits = head->forward(encoder->forward(x.index_select(0, idx)));
        const auto loss = torch::nn::functional::cross_entropy(logits, y.index_select(0, idx));
        opt.zero_grad();
        loss.backward();
        opt.step();
      }
    }
    const auto predicted = predict_with_head(head, encode_features(encoder, data.test.chips));
    run.confusion = confusion_matrix(data.test.labels, predicted, m);
  }
  run.encoder_checksum_after = parameter_checksum(*encoder, true);
  return run;
}

EvalResult fine_tune(const ModelState& state, const EvalProtocol& protocol, const SplitCollections& data,
                     std::uint64_t seed) {
  if (!state.initialized()) throw StateError("fine_tune: model is not initialized");
  require_labeled(data);
  std::vector<ConfusionMatrix> confusions;
  for (int r = 0; r < protocol.runs; ++r) {
    ModelState copy = state.clone();
    Backbone encoder = copy.online->backbone();
    confusions.push_back(fine_tune_once(encoder, protocol, data, seed + static_cast<std::uint64_t>(r)).confusion);
  }
  return aggregate_runs(std::move(confusions));
}

std::vector<ProtocolResult> evaluate_suite(const ModelState& state, const std::vector<EvalProtocol>& protocols,
                                           const SplitCollections& data, std::uint64_t seed) {
  if (protocols.empty()) throw ArgumentError("evaluate_suite: no protocols");
  std::vector<ProtocolResult> results;
  for (std::size_t i = 0; i < protocols.size(); ++i) {
    const auto& p = protocols[i];
    const std::uint64_t run_seed = seed + 1000003ull * (i + 1);
    EvalResult r = p.kind == ProtocolKind::knn ? knn_evaluate(state, p, data) : fine_tune(state, p, data, run_seed);
    results.push_back({p, std::move(r)});
  }
  return results;
}

void write_results_table(const std::string& path, const std::vector<ProtocolResult>& results) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write results table " + path);
  out << "kind,param,mean,std\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : results) {
    const int param = r.protocol.kind == ProtocolKind::knn ? r.protocol.k : r.protocol.epochs;
    out << to_string(r.protocol.kind) << ',' << param << ',' << r.result.accuracy_mean << ',' << r.result.accuracy_std
        << '\n';
  }
}

void write_confusion(const std::string& path, const ConfusionMatrix& confusion) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write confusion matrix " + path);
  for (const auto& row : confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << row[j];
    out << '\n';
  }
}

}  // namespace dcpnet
