#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "dcpnet/image.hpp"
#include "dcpnet/rng.hpp"

namespace dcpnet::test {

inline ImageChip random_chip(int n, std::uint64_t seed) {
  Rng rng = make_rng({seed, 0xC41Full});
  ImageChip chip(n, n);
  for (float& v : chip.pixels()) v = static_cast<float>(uniform01(rng));
  return chip;
}

inline ImageChip constant_chip(int n, float value) { return ImageChip(n, n, value); }

inline double max_abs_diff(const ImageChip& a, const ImageChip& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.pixels()[i]) - b.pixels()[i]));
  return m;
}

inline torch::Tensor randn64(std::vector<std::int64_t> shape, std::uint64_t seed) {
  torch::manual_seed(seed);
  return torch::randn(shape, torch::kFloat64);
}

inline torch::Tensor unit_rows(const torch::Tensor& t) { return t / t.norm(2, 1, true); }

}  // namespace dcpnet::test
