#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "flare/error.hpp"
#include "flare/image.hpp"

namespace flare {

namespace detail {

// Multi-octave value noise: random lattices upsampled bilinearly and summed
// with decaying amplitude. Produces smooth fields with broadband structure,
// statistically similar to photographs for model-training purposes.
inline std::vector<double> value_noise(int w, int h, std::mt19937_64* rng,
                                       int octaves) {
  std::vector<double> field(static_cast<size_t>(w) * h, 0.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double amplitude = 1.0;
  for (int o = 0; o < octaves; ++o) {
    int cell = 4 << o;
    int gw = w / cell + 2, gh = h / cell + 2;
    std::vector<double> lattice(static_cast<size_t>(gw) * gh);
    for (double& v : lattice) v = uni(*rng);
    for (int y = 0; y < h; ++y) {
      double fy = static_cast<double>(y) / cell;
      int y0 = static_cast<int>(fy);
      double ty = fy - y0;
      for (int x = 0; x < w; ++x) {
        double fx = static_cast<double>(x) / cell;
        int x0 = static_cast<int>(fx);
        double tx = fx - x0;
        double v00 = lattice[y0 * gw + x0];
        double v01 = lattice[y0 * gw + x0 + 1];
        double v10 = lattice[(y0 + 1) * gw + x0];
        double v11 = lattice[(y0 + 1) * gw + x0 + 1];
        double top = v00 + (v01 - v00) * tx;
        double bot = v10 + (v11 - v10) * tx;
        field[y * w + x] += amplitude * (top + (bot - top) * ty);
      }
    }
    amplitude *= 0.55;
  }
  return field;
}

}  // namespace detail

// Deterministic procedural colour texture in 8-bit range. Shared luminance
// structure plus weaker independent chroma fields keeps the channels
// correlated the way photographic content is.
inline ImageBuffer synth_texture(int width, int height, uint64_t seed) {
  if (width < 8 || height < 8)
    throw ContractViolation("synth_texture: minimum size is 8x8");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<double> luma = detail::value_noise(width, height, &rng, 5);
  std::vector<double> chroma_a = detail::value_noise(width, height, &rng, 3);
  std::vector<double> chroma_b = detail::value_noise(width, height, &rng, 3);

  double gx = uni(rng) * 2.0 - 1.0, gy = uni(rng) * 2.0 - 1.0;
  double base = 90.0 + 80.0 * uni(rng);

  ImageBuffer img(width, height, 3, ColorSpace::Srgb8);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      size_t i = static_cast<size_t>(y) * width + x;
      double grad = gx * (static_cast<double>(x) / width - 0.5) +
                    gy * (static_cast<double>(y) / height - 0.5);
      double l = base + 55.0 * luma[i] + 40.0 * grad;
      double a = 18.0 * chroma_a[i];
      double b = 18.0 * chroma_b[i];
      img.at(y, x, 0) = std::clamp(l + a, 0.0, 255.0);
      img.at(y, x, 1) = std::clamp(l - 0.5 * a - 0.5 * b, 0.0, 255.0);
      img.at(y, x, 2) = std::clamp(l + b, 0.0, 255.0);
    }
  return img;
}

// Degrade a well-exposed image into a plausible low-light capture:
// gamma compression, exposure scaling, a colour cast, and sensor noise.
inline ImageBuffer synth_low_from_ref(const ImageBuffer& ref, uint64_t seed) {
  detail::require_space(ref, ColorSpace::Srgb8, "synth_low_from_ref");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double gamma = 1.8 + 1.0 * uni(rng);
  double scale = 0.25 + 0.25 * uni(rng);
  double gains[3] = {0.85 + 0.3 * uni(rng), 0.85 + 0.3 * uni(rng),
                     0.85 + 0.3 * uni(rng)};
  double noise_sigma = 2.0 + 4.0 * uni(rng);

  ImageBuffer low(ref.width, ref.height, 3, ColorSpace::Srgb8);
  size_t n = static_cast<size_t>(ref.width) * ref.height;
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      double unit = ref.data[3 * i + c] / 255.0;
      double dark = scale * std::pow(unit, gamma) * gains[c] * 255.0;
      low.data[3 * i + c] =
          std::clamp(dark + noise_sigma * gauss(rng), 0.0, 255.0);
    }
  return low;
}

}  // namespace flare
