#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "flare/error.hpp"

namespace flare {

// Value-range convention carried by an ImageBuffer.
//   Srgb8 : per-channel samples in [0, 255] (stored as doubles)
//   Unit  : per-channel samples in [0, 1]
//   Lab   : CIELAB, L* in [0, 100], a*/b* signed
//   Gray  : single luminance channel, range inherited from its source
enum class ColorSpace { Srgb8, Unit, Lab, Gray };

inline const char* to_string(ColorSpace s) {
  switch (s) {
    case ColorSpace::Srgb8: return "srgb8";
    case ColorSpace::Unit: return "unit";
    case ColorSpace::Lab: return "lab";
    case ColorSpace::Gray: return "gray";
  }
  return "?";
}

// Row-major interleaved H x W x C buffer of doubles. All pixel arithmetic in
// the library happens in 64-bit floats; quantisation to 8 bits occurs only at
// file I/O and inside the stages whose definition demands it.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;
  ColorSpace space = ColorSpace::Srgb8;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, ColorSpace s, double fill = 0.0)
      : width(w), height(h), channels(c), space(s),
        data(static_cast<size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3))
      throw ContractViolation("ImageBuffer: invalid shape " + std::to_string(w) +
                              "x" + std::to_string(h) + "x" + std::to_string(c));
  }

  size_t size() const { return data.size(); }

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  // Replicated-border access: out-of-range coordinates clamp to the edge.
  double at_clamped(int y, int x, int c = 0) const {
    y = std::clamp(y, 0, height - 1);
    x = std::clamp(x, 0, width - 1);
    return at(y, x, c);
  }

  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool bitwise_equal(const ImageBuffer& o) const {
    return same_shape(o) && space == o.space &&
           std::memcmp(data.data(), o.data.data(),
                       data.size() * sizeof(double)) == 0;
  }
};

namespace detail {
inline void require_space(const ImageBuffer& img, ColorSpace s, const char* op) {
  if (img.space != s)
    throw ContractViolation(std::string(op) + ": expected " + to_string(s) +
                            " input, got " + to_string(img.space));
}
}  // namespace detail

// BT.601 luminance weights, the convention the reference SSIM/NIQE
// implementations use.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

// [0,255] -> [0,1]
inline ImageBuffer to_unit(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Srgb8, "to_unit");
  ImageBuffer out = img;
  out.space = ColorSpace::Unit;
  for (double& v : out.data) v /= 255.0;
  return out;
}

// [0,1] -> [0,255]
inline ImageBuffer to_srgb8(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Unit, "to_srgb8");
  ImageBuffer out = img;
  out.space = ColorSpace::Srgb8;
  for (double& v : out.data) v *= 255.0;
  return out;
}

// Single-channel BT.601 luminance; keeps the numeric range of the input.
inline ImageBuffer to_gray(const ImageBuffer& img) {
  if (img.channels != 3)
    throw ContractViolation("to_gray: expected 3 channels, got " +
                            std::to_string(img.channels));
  ImageBuffer out(img.width, img.height, 1, ColorSpace::Gray);
  const double* src = img.data.data();
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    out.data[i] = kLumaR * src[3 * i] + kLumaG * src[3 * i + 1] +
                  kLumaB * src[3 * i + 2];
  }
  return out;
}

// Clamp every sample into [lo, hi].
inline ImageBuffer clip(const ImageBuffer& img, double lo, double hi) {
  if (!(lo < hi)) throw ContractViolation("clip: requires lo < hi");
  ImageBuffer out = img;
  for (double& v : out.data) v = std::clamp(v, lo, hi);
  return out;
}

namespace detail {

// sRGB transfer function on [0,1] values.
inline double srgb_to_linear(double s) {
  return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}
inline double linear_to_srgb(double l) {
  return l <= 0.0031308 ? l * 12.92 : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

// D65 reference white in the sRGB working space.
inline constexpr double kXn = 0.95047;
inline constexpr double kYn = 1.0;
inline constexpr double kZn = 1.08883;

inline double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}
inline double lab_f_inv(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

}  // namespace detail

// sRGB (8-bit range) -> CIELAB under D65. L* in [0,100], a*/b* signed.
inline ImageBuffer rgb_to_lab(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Srgb8, "rgb_to_lab");
  if (img.channels != 3)
    throw ContractViolation("rgb_to_lab: expected 3 channels");
  ImageBuffer out(img.width, img.height, 3, ColorSpace::Lab);
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    double r = detail::srgb_to_linear(img.data[3 * i] / 255.0);
    double g = detail::srgb_to_linear(img.data[3 * i + 1] / 255.0);
    double b = detail::srgb_to_linear(img.data[3 * i + 2] / 255.0);
    double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    double fx = detail::lab_f(x / detail::kXn);
    double fy = detail::lab_f(y / detail::kYn);
    double fz = detail::lab_f(z / detail::kZn);
    out.data[3 * i] = 116.0 * fy - 16.0;
    out.data[3 * i + 1] = 500.0 * (fx - fy);
    out.data[3 * i + 2] = 200.0 * (fy - fz);
  }
  return out;
}

// CIELAB -> sRGB (8-bit range), clamped to [0,255].
inline ImageBuffer lab_to_rgb(const ImageBuffer& img) {
  detail::require_space(img, ColorSpace::Lab, "lab_to_rgb");
  if (img.channels != 3)
    throw ContractViolation("lab_to_rgb: expected 3 channels");
  ImageBuffer out(img.width, img.height, 3, ColorSpace::Srgb8);
  size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    double L = img.data[3 * i];
    double a = img.data[3 * i + 1];
    double b = img.data[3 * i + 2];
    double fy = (L + 16.0) / 116.0;
    double fx = fy + a / 500.0;
    double fz = fy - b / 200.0;
    double x = detail::kXn * detail::lab_f_inv(fx);
    double y = detail::kYn * detail::lab_f_inv(fy);
    double z = detail::kZn * detail::lab_f_inv(fz);
    double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    double bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    out.data[3 * i] =
        std::clamp(detail::linear_to_srgb(std::clamp(rl, 0.0, 1.0)) * 255.0, 0.0, 255.0);
    out.data[3 * i + 1] =
        std::clamp(detail::linear_to_srgb(std::clamp(gl, 0.0, 1.0)) * 255.0, 0.0, 255.0);
    out.data[3 * i + 2] =
        std::clamp(detail::linear_to_srgb(std::clamp(bl, 0.0, 1.0)) * 255.0, 0.0, 255.0);
  }
  return out;
}

// Round every sample to the nearest integer and clamp into [0,255].
inline ImageBuffer quantize8(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (double& v : out.data) v = std::clamp(std::round(v), 0.0, 255.0);
  return out;
}

}  // namespace flare
