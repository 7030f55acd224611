#include "dcpnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "dcpnet/errors.hpp"
#include "dcpnet/io.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet {

void SynthSpec::validate(int cell_size) const {
  if (n_classes < 2) throw ConfigError("dataset.synthetic.n_classes must be >= 2");
  if (chips_per_class < 1) throw ConfigError("dataset.synthetic.chips_per_class must be >= 1");
  if (chip_size < 8) throw ConfigError("dataset.synthetic.chip_size must be >= 8");
  if (cell_size > 0 && chip_size % cell_size != 0) {
    throw ConfigError("dataset.synthetic.chip_size must be divisible by the HOG cell size " +
                      std::to_string(cell_size));
  }
  if (speckle_level < 0.0) throw ConfigError("dataset.synthetic.speckle_level must be >= 0");
}

namespace {

struct Blob {
  double cy, cx;
  double sigma;
  double amplitude;
};

ImageChip render_chip(const SynthSpec& spec, int label, Rng& rng) {
  const int n = spec.chip_size;
  const double s = n;
  const double orientation =
      label * (std::numbers::pi / spec.n_classes) + uniform(rng, -6.0, 6.0) * std::numbers::pi / 180.0;
  const double length = s * uniform(rng, 0.5, 0.7);
  // Beam grows with the class index so neighbouring classes differ in aspect ratio too.
  const double beam = s * (0.08 + 0.02 * label / std::max(1, spec.n_classes - 1)) * uniform(rng, 0.9, 1.1);
  const double cy = (s - 1) / 2.0 + s * uniform(rng, -0.12, 0.12);
  const double cx = (s - 1) / 2.0 + s * uniform(rng, -0.12, 0.12);
  const double gain = uniform(rng, 0.5, 0.9);
  const double sea = uniform(rng, 0.05, 0.4);
  // Short-wavelength swell at a random heading, independent of the class.
  const double swell = 0.75 * uniform(rng, 0.5, 1.0);
  const double swell_heading = uniform(rng, 0.0, std::numbers::pi);
  const double swell_k = 2.0 * std::numbers::pi / (s * uniform(rng, 0.06, 0.09));
  const double swell_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  std::vector<Blob> extras;
  // Superstructure scatterers along the hull axis.
  const int scatterers = uniform_int(rng, 1, 3);
  for (int i = 0; i < scatterers; ++i) {
    const double t = uniform(rng, -0.35, 0.35) * length;
    extras.push_back({cy + t * std::sin(orientation), cx + t * std::cos(orientation), s * 0.025,
                      uniform(rng, 0.1, 0.3)});
  }
  // Class-independent clutter anywhere in the chip.
  const int clutter = uniform_int(rng, 0, 2);
  for (int i = 0; i < clutter; ++i) {
    extras.push_back({uniform(rng, 0.0, s - 1), uniform(rng, 0.0, s - 1), s * uniform(rng, 0.02, 0.05),
                      uniform(rng, 0.15, 0.45)});
  }

  const double ca = std::cos(orientation);
  const double sa = std::sin(orientation);
  ImageChip chip(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double dy = r - cy;
      const double dx = c - cx;
      const double along = (dx * ca + dy * sa) / (0.5 * length);
      const double across = (-dx * sa + dy * ca) / (0.5 * beam);
      const double wave = 0.5 + 0.5 * std::sin(swell_k * (c * std::cos(swell_heading) + r * std::sin(swell_heading)) +
                                               swell_phase);
      double v = sea + swell * wave + gain * std::exp(-std::pow(along * along, 2.0) - across * across);
      for (const auto& b : extras) {
        const double d2 = (r - b.cy) * (r - b.cy) + (c - b.cx) * (c - b.cx);
        v += b.amplitude * std::exp(-0.5 * d2 / (b.sigma * b.sigma));
      }
      chip.at(r, c) = static_cast<float>(v);
    }
  }
  if (spec.speckle_level > 0.0) {
    const double shape = 1.0 / (spec.speckle_level * spec.speckle_level);
    std::gamma_distribution<double> speckle(shape, 1.0 / shape);
    for (float& v : chip.pixels()) v = static_cast<float>(v * speckle(rng));
  }
  clamp_unit(chip);
  return chip;
}

}  // namespace

ChipCollection generate(const SynthSpec& spec) {
  spec.validate(0);
  ChipCollection out;
  out.num_classes = spec.n_classes;
  for (int k = 0; k < spec.n_classes; ++k) {
    for (int i = 0; i < spec.chips_per_class; ++i) {
      Rng rng = make_rng({spec.seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i), 0x53594e54ull});
      out.chips.push_back(render_chip(spec, k, rng));
      out.labels.push_back(k);
      char name[32];
      std::snprintf(name, sizeof(name), "chip_%05zu.pgm", out.chips.size() - 1);
      out.names.emplace_back(name);
    }
  }
  return out;
}

void write_collection(const std::string& directory, const ChipCollection& collection) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  std::ofstream manifest;
  if (collection.labeled()) {
    manifest.open(fs::path(directory) / "labels.csv");
    if (!manifest) throw IngestionError("cannot write manifest in " + directory);
    manifest << "filename,label\n";
  }
  for (std::size_t i = 0; i < collection.size(); ++i) {
    std::string name;
    if (i < collection.names.size()) {
      name = collection.names[i];
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "chip_%05zu.pgm", i);
      name = buf;
    }
    write_pgm((fs::path(directory) / name).string(), collection.chips[i]);
    if (collection.labeled()) manifest << name << ',' << collection.labels[i] << '\n';
  }
}

}  // namespace dcpnet
