#pragma once

#include <cstdint>
#include <string>

#include "dcpnet/dataset.hpp"

namespace dcpnet {

/// Synthetic SAR-like ship chips. Class k is an elongated bright hull at
/// orientation k * 180 / n_classes degrees with a class-specific beam; chip-level
/// nuisances (position, length, gain, sea level, swell, clutter) are shared by all classes.
struct SynthSpec {
  int n_classes = 2;
  int chips_per_class = 100;
  int chip_size = 224;
  double speckle_level = 0.2;  // std of the unit-mean multiplicative gamma speckle
  std::uint64_t seed = 0;

  void validate(int cell_size = 8) const;
  bool operator==(const SynthSpec&) const = default;
};

/// Labeled chips ordered class by class; deterministic in the spec.
ChipCollection generate(const SynthSpec& spec);

/// Writes chip_XXXXX.pgm files plus labels.csv (filename,label) into `directory`.
void write_collection(const std::string& directory, const ChipCollection& collection);

}  // namespace dcpnet
