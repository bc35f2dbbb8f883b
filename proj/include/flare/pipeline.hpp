#pragma once

#include <cmath>
#include <string>

#include "flare/error.hpp"
#include "flare/filters.hpp"
#include "flare/image.hpp"
#include "flare/params.hpp"

namespace flare {

// Fixed stage constants. The guided-filter and bilateral settings follow the
// usual literature defaults; only the eight ParamVector entries are searched.
inline constexpr double kLimeEpsilon = 1e-4;
inline constexpr int kGuidedRadius = 15;
inline constexpr double kGuidedEps = 0.01;
inline constexpr double kAwbEpsilon = 1e-6;
inline constexpr double kBilateralSigmaSpatial = 75.0;
inline constexpr double kBilateralSigmaRange = 75.0;
inline constexpr int kNlmPatchRadius = 3;    // 7x7 template
inline constexpr int kNlmSearchRadius = 10;  // 21x21 window
inline constexpr double kPostSmoothSkip = 0.05;

// Per-pixel max channel response L(x) = max{R,G,B}.
inline ImageBuffer illumination_map(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Unit, "illumination_map");
  if (img.channels != 3)
    throw ContractViolation("illumination_map: expected 3 channels");
  ImageBuffer out(img.width, img.height, 1, ColorSpace::Unit);
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i)
    out.data[i] = std::max(img.data[3 * i],
                           std::max(img.data[3 * i + 1], img.data[3 * i + 2]));
  return out;
}

// Illumination normalisation I / (L_hat^lambda + eps). lambda == 0 bypasses
// the stage. The quotient is clamped back into [0,1] before the tone curve.
inline ImageBuffer stage_lime(const ImageBuffer& img, double lambda) {
  detail::require_space(img, ColorSpace::Unit, "stage_lime");
  if (lambda == 0.0) return img;
  ImageBuffer lum = illumination_map(img);
  ImageBuffer smoothed = guided_filter(lum, lum, kGuidedRadius, kGuidedEps);
  ImageBuffer out(img.width, img.height, 3, ColorSpace::Unit);
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    double denom = std::pow(smoothed.data[i], lambda) + kLimeEpsilon;
    for (int c = 0; c < 3; ++c)
      out.data[3 * i + c] = std::clamp(img.data[3 * i + c] / denom, 0.0, 1.0);
  }
  return out;
}

// Combined tone curve: clip(alpha * img^gamma * 255 + beta, 0, 255).
// Exponentiation happens in the [0,1] domain; the result is 8-bit range.
inline ImageBuffer stage_gamma_linear(const ImageBuffer& img, double alpha,
                                      double beta, double gamma) {
  detail::require_space(img, ColorSpace::Unit, "stage_gamma_linear");
  ImageBuffer out(img.width, img.height, img.channels, ColorSpace::Srgb8);
  for (size_t i = 0; i < img.size(); ++i)
    out.data[i] =
        std::clamp(alpha * std::pow(img.data[i], gamma) * 255.0 + beta, 0.0, 255.0);
  return out;
}

// Grey-World white balance: per-channel gain mean(all)/ (mean(channel)+eps),
// scaled then clamped to [0,255]. Parameter-free.
inline ImageBuffer stage_grey_world(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Srgb8, "stage_grey_world");
  if (img.channels != 3)
    throw ContractViolation("stage_grey_world: expected 3 channels");
  size_t n = static_cast<size_t>(img.width) * img.height;
  double mu[3] = {0.0, 0.0, 0.0};
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mu[c] += img.data[3 * i + c];
  for (double& m : mu) m /= static_cast<double>(n);
  double mu_bar = (mu[0] + mu[1] + mu[2]) / 3.0;
  double gain[3];
  for (int c = 0; c < 3; ++c) gain[c] = mu_bar / (mu[c] + kAwbEpsilon);

  ImageBuffer out(img.width, img.height, 3, ColorSpace::Srgb8);
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      out.data[3 * i + c] = std::clamp(img.data[3 * i + c] * gain[c], 0.0, 255.0);
  return out;
}

// Median kernel size 2*floor(h_c/10)+1, clamped up to the minimum of 3 that
// the stage definition requires whenever it runs at all.
inline int chroma_kernel_size(double h_c) {
  int k = 2 * static_cast<int>(std::floor(h_c / 10.0)) + 1;
  return std::max(k, 3);
}

// LAB-space chrominance denoising: a*/b* are quantised to 8-bit offset form
// (value+128), median filtered, and shifted back; L* passes through.
// h_c == 0 bypasses the stage.
inline ImageBuffer stage_chroma_median(const ImageBuffer& img, double h_c) {
  detail::require_space(img, ColorSpace::Srgb8, "stage_chroma_median");
  if (h_c == 0.0) return img;
  const int k = chroma_kernel_size(h_c);

  ImageBuffer lab = rgb_to_lab(img);
  ImageBuffer a(img.width, img.height, 1, ColorSpace::Gray);
  ImageBuffer b(img.width, img.height, 1, ColorSpace::Gray);
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    a.data[i] = std::clamp(std::round(lab.data[3 * i + 1] + 128.0), 0.0, 255.0);
    b.data[i] = std::clamp(std::round(lab.data[3 * i + 2] + 128.0), 0.0, 255.0);
  }
  ImageBuffer af = median_filter(a, k);
  ImageBuffer bf = median_filter(b, k);
  for (size_t i = 0; i < n; ++i) {
    lab.data[3 * i + 1] = af.data[i] - 128.0;
    lab.data[3 * i + 2] = bf.data[i] - 128.0;
  }
  return lab_to_rgb(lab);
}

// Bilateral spatial filtering with diameter round(d); round(d) < 1 bypasses.
inline ImageBuffer stage_bilateral(const ImageBuffer& img, double d) {
  detail::require_space(img, ColorSpace::Srgb8, "stage_bilateral");
  const int diameter = static_cast<int>(std::lround(d));
  if (diameter < 1) return img;
  return bilateral_filter(img, diameter, kBilateralSigmaSpatial,
                          kBilateralSigmaRange);
}

// NLM denoising in the LAB decomposition: L* filtered with strength h, a*/b*
// with strength h + h_c. Channels are scaled to 8-bit range before filtering
// so the strengths are in intensity units.
inline ImageBuffer stage_nlm(const ImageBuffer& img, double h, double h_c) {
  detail::require_space(img, ColorSpace::Srgb8, "stage_nlm");
  ImageBuffer lab = rgb_to_lab(img);
  ImageBuffer plane(img.width, img.height, 1, ColorSpace::Gray);
  size_t n = static_cast<size_t>(img.width) * img.height;

  const double strengths[3] = {h, h + h_c, h + h_c};
  const double scale[3] = {255.0 / 100.0, 1.0, 1.0};
  const double offset[3] = {0.0, 128.0, 128.0};
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < n; ++i)
      plane.data[i] = lab.data[3 * i + c] * scale[c] + offset[c];
    ImageBuffer filtered =
        nlm_filter_plane(plane, strengths[c], kNlmPatchRadius, kNlmSearchRadius);
    for (size_t i = 0; i < n; ++i)
      lab.data[3 * i + c] = (filtered.data[i] - offset[c]) / scale[c];
  }
  return lab_to_rgb(lab);
}

// Gaussian post-smoothing pass; skipped entirely when sigma_s <= 0.05.
inline ImageBuffer stage_post_smooth(const ImageBuffer& img, double sigma_s) {
  detail::require_space(img, ColorSpace::Srgb8, "stage_post_smooth");
  if (sigma_s <= kPostSmoothSkip) return img;
  return gaussian_blur(img, sigma_s);
}

// The full eight-stage chain. Input is 3-channel 8-bit-range RGB; the output
// is quantised back to integer-valued 8-bit RGB, which keeps metric values
// identical whether computed in memory or from the written file.
inline ImageBuffer enhance(const ImageBuffer& img, const ParamVector& theta,
                           const ParamBounds& bounds = {}) {
  detail::require_space(img, ColorSpace::Srgb8, "enhance");
  if (img.channels != 3) throw ContractViolation("enhance: expected 3 channels");
  bounds.require(theta);

  ImageBuffer unit = to_unit(img);
  ImageBuffer lime = stage_lime(unit, theta.lambda);
  ImageBuffer toned = stage_gamma_linear(lime, theta.alpha, theta.beta, theta.gamma);
  ImageBuffer awb = stage_grey_world(toned);
  ImageBuffer chroma = stage_chroma_median(awb, theta.h_c);
  ImageBuffer spatial = stage_bilateral(chroma, theta.d);
  ImageBuffer nlm = stage_nlm(spatial, theta.h, theta.h_c);
  ImageBuffer smoothed = stage_post_smooth(nlm, theta.sigma_s);
  return quantize8(smoothed);
}

}  // namespace flare
