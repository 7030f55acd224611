#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dcpnet {

/// Single-channel image with intensities normalized to [0, 1], row-major.
class ImageChip {
 public:
  ImageChip() = default;
  ImageChip(int height, int width, float fill = 0.0f);
  ImageChip(int height, int width, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t size() const noexcept { return pixels_.size(); }

  float& at(int row, int col) { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }
  float at(int row, int col) const { return pixels_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<float> pixels() noexcept { return pixels_; }
  std::span<const float> pixels() const noexcept { return pixels_; }

  bool operator==(const ImageChip&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Throws DimensionError for empty chips and ArgumentError for values outside [0, 1].
void validate_chip(const ImageChip& chip);

void clamp_unit(ImageChip& chip);

/// FNV-1a over the raw pixel bytes and dimensions.
std::uint64_t checksum(const ImageChip& chip);

/// Counter-clockwise rotation by 90 degrees.
ImageChip rotate90(const ImageChip& chip);

}  // namespace dcpnet
