#include <gtest/gtest.h>

#include <set>

#include "dcpnet/bank.hpp"
#include "dcpnet/errors.hpp"
#include "dcpnet/pretrain.hpp"
#include "support.hpp"

namespace dcpnet {
namespace {

std::vector<double> random_simplex(Rng& rng, int m, double sharpness) {
  std::vector<double> p(static_cast<size_t>(m));
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(sharpness * uniform(rng, -1.0, 1.0));
    z += v;
  }
  for (auto& v : p) v /= z;
  return p;
}

TEST(Blend, ConvexCombinationAndArgmax) {
  const std::vector<double> pw{0.7, 0.2, 0.1}, ps{0.1, 0.1, 0.8};
  const auto r = blend_pseudo_probs(pw, ps, 0.7);
  ASSERT_EQ(r.probs.size(), 3u);
  EXPECT_NEAR(r.probs[0], 0.7 * 0.7 + 0.3 * 0.1, 1e-12);
  EXPECT_NEAR(r.probs[2], 0.7 * 0.1 + 0.3 * 0.8, 1e-12);
  EXPECT_EQ(r.label, 0);
  EXPECT_NEAR(r.confidence, 0.52, 1e-12);
  EXPECT_EQ(blend_pseudo_probs(pw, ps, 0.0).label, 2);
}

TEST(Blend, TiesGoToTheLowestClass) {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  const auto r = blend_pseudo_probs(p, p, 0.5);
  EXPECT_EQ(r.label, 0);
  EXPECT_DOUBLE_EQ(r.confidence, 0.25);
}

TEST(Blend, RejectsMismatchAndBadWeight) {
  const std::vector<double> a{0.5, 0.5}, b{1.0};
  EXPECT_THROW(blend_pseudo_probs(a, b, 0.5), ArgumentError);
  EXPECT_THROW(blend_pseudo_probs(a, a, 1.5), ArgumentError);
}

TEST(ConfidenceMask, ThresholdIsInclusive) {
  const auto r = PseudoLabelRecord::from_probs({0.95, 0.05});
  EXPECT_TRUE(confidence_mask(r, 0.95));
  EXPECT_FALSE(confidence_mask(r, 0.950001));
}

TEST(PseudoLabels, RowwiseBlendMatchesElementwiseOracle) {
  torch::manual_seed(5);
  const auto pw = torch::softmax(torch::randn({5, 4}, torch::kFloat64), 1);
  const auto ps = torch::softmax(torch::randn({5, 4}, torch::kFloat64), 1);
  const double c = 0.7;
  const auto records = update_pseudo_labels(pw, ps, c);
  ASSERT_EQ(records.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    int best = 0;
    double best_v = -1.0;
    for (int j = 0; j < 4; ++j) {
      const double v = c * pw[i][j].item<double>() + (1 - c) * ps[i][j].item<double>();
      EXPECT_NEAR(records[static_cast<size_t>(i)].probs[static_cast<size_t>(j)], v, 1e-9);
      if (v > best_v) best_v = v, best = j;
    }
    EXPECT_EQ(records[static_cast<size_t>(i)].label, best);
    EXPECT_NEAR(records[static_cast<size_t>(i)].confidence, best_v, 1e-9);
  }
}

TEST(PseudoLabels, WeakOnlyAndUniformCases) {
  torch::manual_seed(6);
  const auto pw = torch::softmax(torch::randn({6, 3}, torch::kFloat64), 1);
  const auto ps = torch::softmax(torch::randn({6, 3}, torch::kFloat64), 1);
  const auto weak_argmax = pw.argmax(1);
  const auto records = update_pseudo_labels(pw, ps, 1.0);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(records[static_cast<size_t>(i)].label, weak_argmax[i].item<int64_t>());

  const auto uniform = torch::full({4, 5}, 0.2, torch::kFloat64);
  for (const auto& r : update_pseudo_labels(uniform, uniform, 0.7)) EXPECT_NEAR(r.confidence, 0.2, 1e-12);
  EXPECT_THROW(update_pseudo_labels(pw, torch::ones({5, 3}), 0.7), ArgumentError);
}

TEST(FilterNegatives, MatchesExhaustivePredicateOnRandomBanks) {
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    Rng rng = make_rng({trial, 0xF17E});
    const int k = uniform_int(rng, 1, 64);
    const int m = uniform_int(rng, 2, 5);
    const double threshold = uniform(rng, 0.2, 1.0);
    const double sharp = uniform(rng, 0.0, 6.0);
    MemoryBank bank;
    bank.features = torch::zeros({k, 4});
    bank.source_epoch = 1;
    for (int j = 0; j < k; ++j) bank.records.push_back(PseudoLabelRecord::from_probs(random_simplex(rng, m, sharp)));
    const auto anchor = PseudoLabelRecord::from_probs(random_simplex(rng, m, sharp));

    std::set<std::int64_t> expected;
    for (int j = 0; j < k; ++j) {
      const auto& e = bank.records[static_cast<size_t>(j)];
      const bool drop = anchor.confidence >= threshold && e.confidence >= threshold && e.label == anchor.label;
      if (!drop) expected.insert(j);
    }
    const auto kept = filter_negatives(anchor, bank, threshold);
    const std::set<std::int64_t> got(kept.begin(), kept.end());
    ASSERT_EQ(got.size(), kept.size()) << "duplicates in trial " << trial;
    ASSERT_EQ(got, expected) << "trial " << trial;
  }
}

TEST(FilterNegatives, UnreliableAnchorKeepsEverything) {
  MemoryBank bank;
  bank.features = torch::zeros({3, 2});
  bank.source_epoch = 1;
  for (int i = 0; i < 3; ++i) bank.records.push_back(PseudoLabelRecord::from_probs({0.99, 0.01}));
  const auto anchor = PseudoLabelRecord::from_probs({0.6, 0.4});
  EXPECT_EQ(filter_negatives(anchor, bank, 0.95).size(), 3u);
  const auto sure = PseudoLabelRecord::from_probs({0.97, 0.03});
  EXPECT_TRUE(filter_negatives(sure, bank, 0.95).empty());
}

TEST(FilterNegatives, EmptyBankIsAnError) {
  MemoryBank bank;
  EXPECT_THROW(filter_negatives(PseudoLabelRecord::from_probs({1.0, 0.0}), bank, 0.5), ArgumentError);
}

TEST(RebuildBank, NormalizesRowsAndKeepsRecords) {
  const auto feats = test::randn64({7, 5}, 3) * 4.0;
  const auto recs = uniform_records(7, 3);
  const MemoryBank bank = rebuild_bank(feats, recs, 2);
  EXPECT_EQ(bank.size(), 7);
  EXPECT_EQ(bank.dim(), 5);
  EXPECT_EQ(bank.source_epoch, 2);
  EXPECT_TRUE(bank.has_pseudo_labels());
  EXPECT_EQ(bank.features.scalar_type(), torch::kFloat32);
  const auto norms = bank.features.norm(2, 1);
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(norms[i].item<double>(), 1.0, 1e-6);
  EXPECT_EQ(bank.records, recs);
  EXPECT_THROW(rebuild_bank(feats, uniform_records(6, 3), 1), ArgumentError);
}

TEST(RebuildBank, BootstrapBankHasNoLabels) {
  const MemoryBank bank = rebuild_bank(test::randn64({4, 3}, 1), uniform_records(4, 2), 0);
  EXPECT_FALSE(bank.has_pseudo_labels());
  for (const auto& r : bank.records) EXPECT_DOUBLE_EQ(r.confidence, 0.5);
}

}  // namespace
}  // namespace dcpnet
