#include "dcpnet/dataset.hpp"

#include <cmath>
#include <map>

#include "dcpnet/errors.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet {

SplitCollections stratified_split(const ChipCollection& all, double test_fraction, std::uint64_t seed) {
  if (!all.labeled()) throw ArgumentError("stratified_split: collection is unlabeled");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("dataset.test_fraction must lie in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < all.size(); ++i) by_class[all.labels[i]].push_back(i);

  Rng rng = make_rng({seed, 0x53504c4954ull});
  std::vector<bool> is_test(all.size(), false);
  for (auto& [label, idx] : by_class) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i - 1)));
      std::swap(idx[i - 1], idx[j]);
    }
    auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(idx.size())));
    if (idx.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, idx.size() - 1);
    for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
  }

  SplitCollections split;
  split.train.num_classes = split.test.num_classes = all.num_classes;
  for (std::size_t i = 0; i < all.size(); ++i) {
    ChipCollection& dst = is_test[i] ? split.test : split.train;
    dst.chips.push_back(all.chips[i]);
    dst.labels.push_back(all.labels[i]);
    if (i < all.names.size()) dst.names.push_back(all.names[i]);
  }
  return split;
}

std::uint64_t checksum(const ChipCollection& collection) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& chip : collection.chips) mix(checksum(chip));
  for (int label : collection.labels) mix(static_cast<std::uint64_t>(label));
  return h;
}

}  // namespace dcpnet
