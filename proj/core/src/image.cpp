#include "dcpnet/image.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "dcpnet/errors.hpp"

namespace dcpnet {

ImageChip::ImageChip(int height, int width, float fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                         std::to_string(width));
  }
  pixels_.assign(static_cast<std::size_t>(height) * width, fill);
}

ImageChip::ImageChip(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
  if (pixels_.size() != static_cast<std::size_t>(height) * width) {
    throw DimensionError("pixel buffer size " + std::to_string(pixels_.size()) + " does not match " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
}

void validate_chip(const ImageChip& chip) {
  if (chip.empty()) {
    throw DimensionError("empty image chip");
  }
  for (float v : chip.pixels()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ArgumentError("pixel value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

void clamp_unit(ImageChip& chip) {
  for (float& v : chip.pixels()) {
    v = std::clamp(v, 0.0f, 1.0f);
  }
}

std::uint64_t checksum(const ImageChip& chip) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const int dims[2] = {chip.height(), chip.width()};
  mix(dims, sizeof(dims));
  mix(chip.pixels().data(), chip.pixels().size_bytes());
  return h;
}

ImageChip rotate90(const ImageChip& chip) {
  // out(i, j) = in(j, W - 1 - i)
  ImageChip out(chip.width(), chip.height());
  for (int i = 0; i < out.height(); ++i) {
    for (int j = 0; j < out.width(); ++j) {
      out.at(i, j) = chip.at(j, chip.width() - 1 - i);
    }
  }
  return out;
}

}  // namespace dcpnet
