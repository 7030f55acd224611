#pragma once

#include <vector>

#include "dcpnet/image.hpp"

namespace dcpnet {

/// Histogram-of-oriented-gradients parameters. Unsigned gradients over [0, 180).
struct HogConfig {
  int orientations = 9;
  int cell_size = 8;
  int block_size = 2;  // cells per block side; blocks stride by one cell

  void validate() const;
  bool operator==(const HogConfig&) const = default;
};

/// Grid of per-cell orientation histograms, laid out [row][col][bin].
struct HogCells {
  int rows = 0;
  int cols = 0;
  int bins = 0;
  std::vector<float> values;

  float& at(int r, int c, int b) { return values[(static_cast<std::size_t>(r) * cols + c) * bins + b]; }
  float at(int r, int c, int b) const { return values[(static_cast<std::size_t>(r) * cols + c) * bins + b]; }
};

/// Raw magnitude-weighted histograms. Orientation votes are split linearly
/// between the two nearest bin centers; bin b is centered at b * 180 / orientations.
HogCells hog_cell_histograms(const ImageChip& chip, const HogConfig& cfg);

/// Block-normalized histograms: each block is L2-normalized and every cell
/// takes the mean of its normalized copies over the blocks that contain it.
HogCells hog_normalized_cells(const ImageChip& chip, const HogConfig& cfg);

/// Standard descriptor vector (concatenated normalized blocks).
std::vector<float> hog_descriptor(const ImageChip& chip, const HogConfig& cfg);

/// Renders each cell as a star of edge-oriented line glyphs weighted by its bins.
/// The result is unscaled.
ImageChip render_hog(const HogCells& cells, int cell_size);

/// Deterministic handcrafted view: rendered normalized HOG map, rescaled to [0, 1].
ImageChip handcrafted_transform(const ImageChip& chip, const HogConfig& cfg);

}  // namespace dcpnet
