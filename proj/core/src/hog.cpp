#include "dcpnet/hog.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dcpnet/errors.hpp"

namespace dcpnet {

namespace {

constexpr double kBlockEps = 1e-3;

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

void check_chip(const ImageChip& chip, const HogConfig& cfg) {
  cfg.validate();
  if (chip.empty()) {
    throw DimensionError("HOG input chip is empty");
  }
  if (chip.height() % cfg.cell_size != 0 || chip.width() % cfg.cell_size != 0) {
    throw ConfigError("hog.cell_size " + std::to_string(cfg.cell_size) + " does not divide chip size " +
                      std::to_string(chip.height()) + "x" + std::to_string(chip.width()));
  }
}

}  // namespace

void HogConfig::validate() const {
  if (orientations < 2) throw ConfigError("hog.orientations must be >= 2");
  if (cell_size < 1) throw ConfigError("hog.cell_size must be >= 1");
  if (block_size < 1) throw ConfigError("hog.block_size must be >= 1");
}

HogCells hog_cell_histograms(const ImageChip& chip, const HogConfig& cfg) {
  check_chip(chip, cfg);
  const int h = chip.height();
  const int w = chip.width();
  HogCells cells;
  cells.rows = h / cfg.cell_size;
  cells.cols = w / cfg.cell_size;
  cells.bins = cfg.orientations;
  cells.values.assign(static_cast<std::size_t>(cells.rows) * cells.cols * cells.bins, 0.0f);

  const double bin_width = 180.0 / cfg.orientations;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double gx = static_cast<double>(chip.at(r, clamp_index(c + 1, w))) - chip.at(r, clamp_index(c - 1, w));
      const double gy = static_cast<double>(chip.at(clamp_index(r + 1, h), c)) - chip.at(clamp_index(r - 1, h), c);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      angle = std::fmod(angle + 360.0, 180.0);
      const double pos = angle / bin_width;
      const double lower = std::floor(pos);
      const double frac = pos - lower;
      const int b0 = static_cast<int>(lower) % cfg.orientations;
      const int b1 = (b0 + 1) % cfg.orientations;
      const int cr = r / cfg.cell_size;
      const int cc = c / cfg.cell_size;
      cells.at(cr, cc, b0) += static_cast<float>(mag * (1.0 - frac));
      cells.at(cr, cc, b1) += static_cast<float>(mag * frac);
    }
  }
  return cells;
}

namespace {

template <typename Visit>
void for_each_block(const HogCells& raw, int block, Visit&& visit) {
  for (int br = 0; br + block <= raw.rows; ++br) {
    for (int bc = 0; bc + block <= raw.cols; ++bc) {
      double sq = 0.0;
      for (int r = br; r < br + block; ++r)
        for (int c = bc; c < bc + block; ++c)
          for (int b = 0; b < raw.bins; ++b) sq += static_cast<double>(raw.at(r, c, b)) * raw.at(r, c, b);
      const double scale = 1.0 / std::sqrt(sq + kBlockEps * kBlockEps);
      visit(br, bc, scale);
    }
  }
}

void check_blocks(const HogCells& raw, int block) {
  if (raw.rows < block || raw.cols < block) {
    throw ConfigError("hog.block_size " + std::to_string(block) + " exceeds the cell grid " +
                      std::to_string(raw.rows) + "x" + std::to_string(raw.cols));
  }
}

}  // namespace

HogCells hog_normalized_cells(const ImageChip& chip, const HogConfig& cfg) {
  const HogCells raw = hog_cell_histograms(chip, cfg);
  check_blocks(raw, cfg.block_size);
  HogCells out = raw;
  std::vector<double> acc(raw.values.size(), 0.0);
  std::vector<int> count(static_cast<std::size_t>(raw.rows) * raw.cols, 0);
  const int block = cfg.block_size;
  for_each_block(raw, block, [&](int br, int bc, double scale) {
    for (int r = br; r < br + block; ++r) {
      for (int c = bc; c < bc + block; ++c) {
        ++count[static_cast<std::size_t>(r) * raw.cols + c];
        for (int b = 0; b < raw.bins; ++b) {
          acc[(static_cast<std::size_t>(r) * raw.cols + c) * raw.bins + b] += raw.at(r, c, b) * scale;
        }
      }
    }
  });
  for (int r = 0; r < raw.rows; ++r) {
    for (int c = 0; c < raw.cols; ++c) {
      const int n = count[static_cast<std::size_t>(r) * raw.cols + c];
      for (int b = 0; b < raw.bins; ++b) {
        const double v = acc[(static_cast<std::size_t>(r) * raw.cols + c) * raw.bins + b];
        out.at(r, c, b) = n > 0 ? static_cast<float>(v / n) : 0.0f;
      }
    }
  }
  return out;
}

std::vector<float> hog_descriptor(const ImageChip& chip, const HogConfig& cfg) {
  const HogCells raw = hog_cell_histograms(chip, cfg);
  check_blocks(raw, cfg.block_size);
  std::vector<float> desc;
  const int block = cfg.block_size;
  for_each_block(raw, block, [&](int br, int bc, double scale) {
    for (int r = br; r < br + block; ++r)
      for (int c = bc; c < bc + block; ++c)
        for (int b = 0; b < raw.bins; ++b) desc.push_back(static_cast<float>(raw.at(r, c, b) * scale));
  });
  return desc;
}

ImageChip render_hog(const HogCells& cells, int cell_size) {
  ImageChip out(cells.rows * cell_size, cells.cols * cell_size);
  const double center = (cell_size - 1) / 2.0;
  std::vector<double> cosines(cells.bins);
  std::vector<double> sines(cells.bins);
  for (int b = 0; b < cells.bins; ++b) {
    const double theta = b * (std::numbers::pi / cells.bins);
    cosines[b] = std::cos(theta);
    sines[b] = std::sin(theta);
  }
  for (int cr = 0; cr < cells.rows; ++cr) {
    for (int cc = 0; cc < cells.cols; ++cc) {
      for (int y = 0; y < cell_size; ++y) {
        for (int x = 0; x < cell_size; ++x) {
          const double u = x - center;
          const double v = y - center;
          double value = 0.0;
          for (int b = 0; b < cells.bins; ++b) {
            // The glyph runs along the edge, perpendicular to the gradient of bin b,
            // so the distance to it is the projection onto the gradient direction.
            const double dist = std::abs(u * cosines[b] + v * sines[b]);
            value += cells.at(cr, cc, b) * std::max(0.0, 1.0 - dist);
          }
          out.at(cr * cell_size + y, cc * cell_size + x) = static_cast<float>(value);
        }
      }
    }
  }
  return out;
}

ImageChip handcrafted_transform(const ImageChip& chip, const HogConfig& cfg) {
  ImageChip map = render_hog(hog_normalized_cells(chip, cfg), cfg.cell_size);
  float peak = 0.0f;
  for (float v : map.pixels()) peak = std::max(peak, v);
  if (peak > 0.0f) {
    for (float& v : map.pixels()) v = std::clamp(v / peak, 0.0f, 1.0f);
  }
  return map;
}

}  // namespace dcpnet
