#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcpnet/image.hpp"

namespace dcpnet {

/// Chips with optional integer labels in [0, num_classes).
struct ChipCollection {
  std::vector<ImageChip> chips;
  std::vector<int> labels;  // empty when unlabeled
  std::vector<std::string> names;
  int num_classes = 0;

  bool labeled() const { return !labels.empty(); }
  std::size_t size() const { return chips.size(); }
};

struct SplitCollections {
  ChipCollection train;
  ChipCollection test;
};

/// Deterministic stratified split; each class sends round(test_fraction * n_c)
/// chips (at least one when it has two or more) to the test side.
SplitCollections stratified_split(const ChipCollection& all, double test_fraction, std::uint64_t seed);

std::uint64_t checksum(const ChipCollection& collection);

}  // namespace dcpnet
