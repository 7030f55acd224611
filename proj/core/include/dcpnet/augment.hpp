#pragma once

#include <utility>

#include "dcpnet/hog.hpp"
#include "dcpnet/image.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet {

/// Smallest chip side accepted by the random resized crop.
inline constexpr int kMinCroppableSize = 4;

struct AugConfig {
  std::pair<double, double> crop_scale_range{0.5, 1.0};  // fraction of the chip area
  double flip_probability = 0.5;
  std::pair<double, double> blur_sigma_range{0.1, 2.0};  // pixels
  double jitter_strength = 0.4;                          // brightness/contrast factor spread
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugConfig&) const = default;
};

/// The three views of one chip used by a training step.
struct ViewTriple {
  ImageChip weak;
  ImageChip strong;
  ImageChip handcrafted;
};

/// Random resized (square) crop followed by a random horizontal flip.
/// Output has the input's dimensions.
ImageChip weak_augment(const ImageChip& chip, const AugConfig& cfg, Rng& rng);

/// weak_augment, then Gaussian blur and brightness/contrast jitter, clamped to [0, 1].
/// Consumes the same leading draws as weak_augment.
ImageChip strong_augment(const ImageChip& chip, const AugConfig& cfg, Rng& rng);

/// Builds a ViewTriple. The handcrafted view is computed from the unaugmented chip.
ViewTriple make_views(const ImageChip& chip, const AugConfig& cfg, const HogConfig& hog, Rng& rng);
/// As above with a precomputed handcrafted view.
ViewTriple make_views(const ImageChip& chip, const ImageChip& handcrafted, const AugConfig& cfg, Rng& rng);

// Building blocks.
ImageChip crop(const ImageChip& chip, int top, int left, int height, int width);
ImageChip resize_bilinear(const ImageChip& chip, int height, int width);
ImageChip hflip(const ImageChip& chip);
/// Separable Gaussian blur, radius ceil(3 sigma), reflected borders, normalized kernel.
ImageChip gaussian_blur(const ImageChip& chip, double sigma);
std::vector<double> gaussian_kernel(double sigma);
/// Center square crop followed by bilinear resize to size x size.
ImageChip center_crop_resize(const ImageChip& chip, int size);

}  // namespace dcpnet
