#include "dcpnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcpnet/errors.hpp"

namespace dcpnet {

void AugConfig::validate() const {
  const auto [clo, chi] = crop_scale_range;
  if (!(clo > 0.0 && clo <= chi && chi <= 1.0)) {
    throw ConfigError("augment.crop_scale_range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw ConfigError("augment.flip_probability must lie in [0, 1]");
  }
  const auto [blo, bhi] = blur_sigma_range;
  if (!(blo >= 0.0 && blo <= bhi)) {
    throw ConfigError("augment.blur_sigma_range must satisfy 0 <= lo <= hi");
  }
  if (!(jitter_strength >= 0.0 && jitter_strength <= 1.0)) {
    throw ConfigError("augment.jitter_strength must lie in [0, 1]");
  }
}

namespace {

void check_croppable(const ImageChip& chip) {
  if (chip.empty() || chip.height() < kMinCroppableSize || chip.width() < kMinCroppableSize) {
    throw DimensionError("chip " + std::to_string(chip.height()) + "x" + std::to_string(chip.width()) +
                         " is smaller than the minimum croppable size " + std::to_string(kMinCroppableSize));
  }
  if (chip.height() != chip.width()) {
    throw DimensionError("augmentation expects square chips");
  }
}

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

ImageChip crop(const ImageChip& chip, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height <= 0 || width <= 0 || top + height > chip.height() ||
      left + width > chip.width()) {
    throw DimensionError("crop window exceeds the chip");
  }
  ImageChip out(height, width);
  for (int r = 0; r < height; ++r) {
    std::copy_n(&chip.pixels()[static_cast<std::size_t>(top + r) * chip.width() + left], width,
                &out.pixels()[static_cast<std::size_t>(r) * width]);
  }
  return out;
}

ImageChip resize_bilinear(const ImageChip& chip, int height, int width) {
  if (chip.height() == height && chip.width() == width) return chip;
  ImageChip out(height, width);
  const double sy = static_cast<double>(chip.height()) / height;
  const double sx = static_cast<double>(chip.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, chip.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, chip.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, chip.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, chip.width() - 1);
      const double fx = x - x0;
      const double top = chip.at(y0, x0) * (1.0 - fx) + chip.at(y0, x1) * fx;
      const double bottom = chip.at(y1, x0) * (1.0 - fx) + chip.at(y1, x1) * fx;
      out.at(r, c) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
    }
  }
  return out;
}

ImageChip hflip(const ImageChip& chip) {
  ImageChip out = chip;
  for (int r = 0; r < chip.height(); ++r) {
    for (int c = 0; c < chip.width(); ++c) {
      out.at(r, c) = chip.at(r, chip.width() - 1 - c);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

ImageChip gaussian_blur(const ImageChip& chip, double sigma) {
  if (!(sigma > 0.0)) return chip;
  const std::vector<double> k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int h = chip.height();
  const int w = chip.width();
  std::vector<double> tmp(static_cast<std::size_t>(h) * w, 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += k[t + radius] * chip.at(r, reflect101(c + t, w));
      tmp[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  ImageChip out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += k[t + radius] * tmp[static_cast<std::size_t>(reflect101(r + t, h)) * w + c];
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

ImageChip center_crop_resize(const ImageChip& chip, int size) {
  if (size <= 0) throw DimensionError("crop size must be positive");
  const int side = std::min(chip.height(), chip.width());
  const int top = (chip.height() - side) / 2;
  const int left = (chip.width() - side) / 2;
  ImageChip square = (side == chip.height() && side == chip.width()) ? chip : crop(chip, top, left, side, side);
  return resize_bilinear(square, size, size);
}

ImageChip weak_augment(const ImageChip& chip, const AugConfig& cfg, Rng& rng) {
  check_croppable(chip);
  cfg.validate();
  const int n = chip.height();
  const double scale = uniform(rng, cfg.crop_scale_range.first, cfg.crop_scale_range.second);
  const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(scale) * n)), 1, n);
  const int top = uniform_int(rng, 0, n - side);
  const int left = uniform_int(rng, 0, n - side);
  const bool flip = uniform01(rng) < cfg.flip_probability;

  ImageChip out = side == n ? chip : resize_bilinear(crop(chip, top, left, side, side), n, n);
  if (flip) out = hflip(out);
  return out;
}

ImageChip strong_augment(const ImageChip& chip, const AugConfig& cfg, Rng& rng) {
  ImageChip out = weak_augment(chip, cfg, rng);
  const double sigma = uniform(rng, cfg.blur_sigma_range.first, cfg.blur_sigma_range.second);
  if (sigma > 0.0) out = gaussian_blur(out, sigma);
  if (cfg.jitter_strength > 0.0) {
    const double j = cfg.jitter_strength;
    const double brightness = uniform(rng, std::max(0.0, 1.0 - j), 1.0 + j);
    const double contrast = uniform(rng, std::max(0.0, 1.0 - j), 1.0 + j);
    double mean = 0.0;
    for (float v : out.pixels()) mean += v;
    mean = mean * brightness / static_cast<double>(out.size());
    for (float& v : out.pixels()) {
      v = static_cast<float>(mean + contrast * (brightness * v - mean));
    }
  }
  clamp_unit(out);
  return out;
}

ViewTriple make_views(const ImageChip& chip, const ImageChip& handcrafted, const AugConfig& cfg, Rng& rng) {
  ViewTriple views;
  views.weak = weak_augment(chip, cfg, rng);
  views.strong = strong_augment(chip, cfg, rng);
  views.handcrafted = handcrafted;
  return views;
}

ViewTriple make_views(const ImageChip& chip, const AugConfig& cfg, const HogConfig& hog, Rng& rng) {
  return make_views(chip, handcrafted_transform(chip, hog), cfg, rng);
}

}  // namespace dcpnet
