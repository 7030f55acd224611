#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dcpnet/errors.hpp"
#include "dcpnet/evaluation.hpp"
#include "dcpnet/rng.hpp"
#include "dcpnet/synth.hpp"
#include "support.hpp"

namespace dcpnet {
namespace {

// Full stable sort of cosine similarities, then vote; computed without the library.
int oracle_knn(const torch::Tensor& q, const torch::Tensor& bank, const std::vector<int>& labels, int m, int k,
               double tau, bool majority) {
  const auto n = bank.size(0);
  const auto qa = q.accessor<double, 1>();
  const auto ba = bank.accessor<double, 2>();
  double qn = 0.0;
  for (std::int64_t j = 0; j < q.size(0); ++j) qn += qa[j] * qa[j];
  std::vector<std::pair<double, std::int64_t>> sims;
  for (std::int64_t i = 0; i < n; ++i) {
    double dot = 0.0, bn = 0.0;
    for (std::int64_t j = 0; j < q.size(0); ++j) {
      dot += ba[i][j] * qa[j];
      bn += ba[i][j] * ba[i][j];
    }
    sims.emplace_back(dot / std::sqrt(bn * qn), i);
  }
  std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> votes(static_cast<std::size_t>(m), 0.0);
  for (int r = 0; r < k; ++r) {
    votes[static_cast<std::size_t>(labels[static_cast<std::size_t>(sims[r].second)])] +=
        majority ? 1.0 : std::exp(sims[r].first / tau);
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

KnnBank bank_of(std::vector<std::vector<double>> rows, std::vector<int> labels, int m) {
  const auto k = static_cast<std::int64_t>(rows.size());
  const auto d = static_cast<std::int64_t>(rows.front().size());
  auto t = torch::empty({k, d}, torch::kFloat64);
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < d; ++j) t[i][j] = rows[i][j];
  return KnnBank::from_features(t, std::move(labels), m);
}

TEST(Knn, TrivialCases) {
  const KnnBank bank = bank_of({{1, 0}, {0, 1}, {0.9, 0.1}}, {0, 1, 0}, 2);
  const auto q = torch::tensor({1.0, 0.05}, torch::kFloat64);
  EXPECT_EQ(knn_classify(q, bank, 1, 0.07), 0);
  EXPECT_EQ(knn_classify(torch::tensor({0.0, 1.0}, torch::kFloat64), bank, 1, 0.07), 1);
  // k = K with identical similarities: the class with more entries wins.
  const KnnBank flat = bank_of({{1, 0}, {1, 0}, {1, 0}}, {1, 0, 1}, 2);
  EXPECT_EQ(knn_classify(q, flat, 3, 0.07), 1);
  EXPECT_EQ(knn_classify(q, flat, 3, 0.07, true), 1);
  // Vote ties go to the lower class.
  const KnnBank tie = bank_of({{1, 0}, {1, 0}}, {1, 0}, 2);
  EXPECT_EQ(knn_classify(q, tie, 2, 0.07), 0);
}

TEST(Knn, ArgumentErrors) {
  const KnnBank bank = bank_of({{1, 0}, {0, 1}}, {0, 1}, 2);
  const auto q = torch::tensor({1.0, 0.0}, torch::kFloat64);
  EXPECT_THROW(knn_classify(q, bank, 3, 0.07), ArgumentError);
  EXPECT_THROW(knn_classify(q, bank, 0, 0.07), ArgumentError);
  EXPECT_THROW(knn_classify(q, bank, 1, 0.0), ArgumentError);
  EXPECT_THROW(knn_classify(torch::tensor({1.0, 0.0, 0.0}, torch::kFloat64), bank, 1, 0.07), ArgumentError);
  EXPECT_THROW(knn_classify(torch::zeros({2}, torch::kFloat64), bank, 1, 0.07), DegenerateInputError);
  EXPECT_THROW(bank_of({{1, 0}}, {2}, 2), ArgumentError);
}

TEST(Knn, MatchesBruteForceOracle) {
  Rng rng = make_rng({44});
  for (int trial = 0; trial < 300; ++trial) {
    const int n = uniform_int(rng, 1, 128);
    const int d = uniform_int(rng, 2, 16);
    const int m = uniform_int(rng, 2, 5);
    const auto feats = test::randn64({n, d}, static_cast<std::uint64_t>(trial));
    const auto q = test::randn64({d}, static_cast<std::uint64_t>(trial) + 100000);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int& l : labels) l = uniform_int(rng, 0, m - 1);
    const KnnBank bank = KnnBank::from_features(feats, labels, m);
    for (int k : {1, 3, 45}) {
      if (k > n) continue;
      for (bool majority : {false, true}) {
        EXPECT_EQ(knn_classify(q, bank, k, 0.07, majority), oracle_knn(q, feats, labels, m, k, 0.07, majority))
            << "trial " << trial << " k " << k;
      }
    }
  }
}

TEST(Knn, QueryScaleDoesNotMatter) {
  const auto feats = test::randn64({40, 8}, 3);
  std::vector<int> labels(40);
  for (int i = 0; i < 40; ++i) labels[i] = i % 3;
  const KnnBank bank = KnnBank::from_features(feats, labels, 3);
  for (int i = 0; i < 20; ++i) {
    const auto q = test::randn64({8}, 50 + i);
    EXPECT_EQ(knn_classify(q, bank, 5, 0.07), knn_classify(q * 37.5, bank, 5, 0.07));
  }
}

TEST(Metrics, ConfusionAndAccuracy) {
  const auto c = confusion_matrix({0, 0, 1, 1, 1}, {0, 1, 1, 1, 0}, 2);
  EXPECT_EQ(c, (ConfusionMatrix{{1, 1}, {1, 2}}));
  EXPECT_DOUBLE_EQ(accuracy_percent(c), 60.0);
  EXPECT_THROW(confusion_matrix({0}, {0, 1}, 2), ArgumentError);
}

TEST(Metrics, AggregateUsesPopulationStd) {
  const EvalResult r = aggregate_runs({{{1, 1}, {0, 2}}, {{2, 0}, {0, 2}}, {{0, 2}, {0, 2}}});
  ASSERT_EQ(r.run_accuracies.size(), 3u);
  EXPECT_DOUBLE_EQ(r.run_accuracies[0], 75.0);
  EXPECT_DOUBLE_EQ(r.run_accuracies[1], 100.0);
  EXPECT_DOUBLE_EQ(r.run_accuracies[2], 50.0);
  EXPECT_NEAR(r.accuracy_mean, 75.0, 1e-12);
  EXPECT_NEAR(r.accuracy_std, std::sqrt((0.0 + 625.0 + 625.0) / 3.0), 1e-9);
  EXPECT_NEAR(r.per_class_accuracy[0], 50.0, 1e-12);
  EXPECT_NEAR(r.per_class_accuracy[1], 100.0, 1e-12);
  EXPECT_EQ(r.confusion, (ConfusionMatrix{{1, 1}, {0, 2}}));
  EXPECT_THROW(aggregate_runs({}), ArgumentError);
}

TEST(Heads, LinearHeadSeparatesSeparableFeatures) {
  // Two well-separated Gaussian clouds; any reasonable linear fit classifies them perfectly.
  const int n = 60;
  auto feats = test::randn64({n, 4}, 9).to(torch::kFloat32) * 0.1;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    feats[i][0] += labels[i] ? 3.0 : -3.0;
  }
  // Independent least-squares check that the data really is linearly separable.
  const auto x = torch::cat({feats.to(torch::kFloat64), torch::ones({n, 1}, torch::kFloat64)}, 1);
  auto y = torch::empty({n, 1}, torch::kFloat64);
  for (int i = 0; i < n; ++i) y[i][0] = labels[i] ? 1.0 : -1.0;
  const auto w = std::get<0>(torch::linalg_lstsq(x, y, std::nullopt, std::nullopt));
  const auto fit = x.mm(w);
  for (int i = 0; i < n; ++i) ASSERT_EQ((fit[i][0].item<double>() > 0.0), (labels[i] == 1));

  for (HeadKind kind : {HeadKind::linear, HeadKind::mlp}) {
    auto head = train_head_on_features(kind, feats, labels, 2, 50, 1e-2, 16, 0);
    const auto pred = predict_with_head(head, feats);
    EXPECT_DOUBLE_EQ(accuracy_percent(confusion_matrix(labels, pred, 2)), 100.0);
  }
}

SplitCollections tiny_split(int per_class = 12, int size = 32, std::uint64_t seed = 1) {
  SynthSpec spec;
  spec.chip_size = size;
  spec.chips_per_class = per_class;
  spec.seed = seed;
  return stratified_split(generate(spec), 0.25, seed);
}

ModelState tiny_model(std::uint64_t seed = 0) {
  return init_model(EncoderSpec{BackboneFamily::resnet_tiny, 0, 32}, 2, seed);
}

TEST(FineTune, FrozenProtocolsLeaveTheEncoderBitIdentical) {
  const auto data = tiny_split();
  ModelState state = tiny_model();
  for (ProtocolKind kind : {ProtocolKind::ft1, ProtocolKind::ft2, ProtocolKind::ftall}) {
    EvalProtocol p;
    p.kind = kind;
    p.epochs = 2;
    p.batch_size = 8;
    ModelState copy = state.clone();
    Backbone encoder = copy.online->backbone();
    const FineTuneRun run = fine_tune_once(encoder, p, data, 3);
    if (kind == ProtocolKind::ftall) {
      EXPECT_NE(run.encoder_checksum_before, run.encoder_checksum_after);
    } else {
      EXPECT_EQ(run.encoder_checksum_before, run.encoder_checksum_after);
    }
    EXPECT_EQ(confusion_matrix({}, {}, 2).size(), run.confusion.size());
  }
  const auto before = parameter_checksum(*state.online, true);
  EvalProtocol all;
  all.kind = ProtocolKind::ftall;
  all.epochs = 1;
  all.batch_size = 8;
  fine_tune(state, all, data, 0);
  EXPECT_EQ(parameter_checksum(*state.online, true), before);
}

TEST(FineTune, RejectsKnnAndUnlabeledData) {
  const auto data = tiny_split();
  ModelState state = tiny_model();
  Backbone encoder = state.online->backbone();
  EXPECT_THROW(fine_tune_once(encoder, EvalProtocol{}, data, 0), ArgumentError);
  SplitCollections unlabeled = data;
  unlabeled.test.labels.clear();
  EvalProtocol p;
  p.kind = ProtocolKind::ft1;
  EXPECT_THROW(fine_tune(state, p, unlabeled, 0), ArgumentError);
  EXPECT_THROW(fine_tune(ModelState{}, p, data, 0), StateError);
}

TEST(Suite, RowsFollowProtocolOrderIncludingDuplicates) {
  const auto data = tiny_split();
  const ModelState state = tiny_model();
  EvalProtocol knn;
  knn.k = 5;
  knn.runs = 3;
  EvalProtocol ft1;
  ft1.kind = ProtocolKind::ft1;
  ft1.epochs = 2;
  ft1.runs = 2;
  const auto results = evaluate_suite(state, {knn, ft1, knn}, data, 0);
  ASSERT_EQ(results.size(), 3u);
  EXPECT_EQ(results[0].protocol, knn);
  EXPECT_EQ(results[1].protocol, ft1);
  EXPECT_EQ(results[0].result.run_accuracies.size(), 3u);
  EXPECT_EQ(results[0].result.accuracy_std, 0.0);
  EXPECT_EQ(results[1].result.run_accuracies.size(), 2u);
  EXPECT_EQ(results[0].result.accuracy_mean, results[2].result.accuracy_mean);
  EXPECT_EQ(results[0].result.accuracy_mean, accuracy_percent(results[0].result.confusion));
  EXPECT_THROW(evaluate_suite(state, {}, data, 0), ArgumentError);

  const auto dir = std::filesystem::temp_directory_path() / "dcpnet_suite_test";
  std::filesystem::create_directories(dir);
  write_results_table((dir / "results.csv").string(), results);
  std::ifstream in(dir / "results.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "kind,param,mean,std");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Suite, SameSeedSameTable) {
  const auto data = tiny_split();
  const ModelState state = tiny_model();
  EvalProtocol ft2;
  ft2.kind = ProtocolKind::ft2;
  ft2.epochs = 2;
  const auto a = evaluate_suite(state, {EvalProtocol{.k = 5}, ft2}, data, 4);
  const auto b = evaluate_suite(state, {EvalProtocol{.k = 5}, ft2}, data, 4);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].result.run_confusions, b[i].result.run_confusions);
}

TEST(Knn, RandomEncoderSitsInTheChanceBand) {
  // Balanced two-class chips at 64 px; an untrained encoder carries little class signal at this scale.
  SynthSpec spec;
  spec.chip_size = 64;
  spec.chips_per_class = 50;
  spec.seed = 7;
  const auto data = stratified_split(generate(spec), 0.3, 7);
  EvalProtocol p;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelConfig mc;
    mc.encoder.backbone = BackboneFamily::resnet_tiny;
    mc.num_classes = 2;
    total += knn_evaluate(init_model(mc, seed), p, data).accuracy_mean;
  }
  const double mean = total / 5.0;
  EXPECT_GE(mean, 35.0);
  EXPECT_LE(mean, 65.0);
}

TEST(Protocols, ParseAndValidate) {
  EXPECT_EQ(parse_protocol("ftall"), ProtocolKind::ftall);
  EXPECT_EQ(to_string(ProtocolKind::ft2), "ft2");
  EXPECT_THROW(parse_protocol("ft3"), ConfigError);
  EvalProtocol p;
  EXPECT_EQ(p.k, 45);
  p.k = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

}  // namespace
}  // namespace dcpnet
