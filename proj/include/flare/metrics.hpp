#pragma once

#include <cmath>
#include <vector>

#include "flare/error.hpp"
#include "flare/image.hpp"

namespace flare {

// Objective weights: objective = 1.0*psnr + 80.0*ssim - 5.0*niqe.
inline constexpr double kWeightPsnr = 1.0;
inline constexpr double kWeightSsim = 80.0;
inline constexpr double kWeightNiqe = 5.0;

inline constexpr double kPsnrCap = 100.0;

// SSIM reference constants: 11x11 Gaussian window, sigma 1.5, K1/K2 on an
// 8-bit dynamic range.
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);

inline double composite_objective(double psnr_db, double ssim_val, double niqe_val) {
  if (!std::isfinite(psnr_db) || !std::isfinite(ssim_val) || !std::isfinite(niqe_val))
    throw ContractViolation("composite_objective: non-finite input");
  return kWeightPsnr * psnr_db + kWeightSsim * ssim_val - kWeightNiqe * niqe_val;
}

// Scores for one enhanced/reference pair. `objective` always equals the
// weighted combination of the other three fields as stored.
struct QualityReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double niqe = 0.0;
  double objective = 0.0;

  static QualityReport from(double psnr_db, double ssim_val, double niqe_val) {
    QualityReport r;
    r.psnr = psnr_db;
    r.ssim = ssim_val;
    r.niqe = niqe_val;
    r.objective = composite_objective(psnr_db, ssim_val, niqe_val);
    return r;
  }
};

// Peak signal-to-noise ratio over all samples and channels of two 8-bit
// images, capped at 100 dB so identical inputs stay finite.
inline double psnr(const ImageBuffer& x, const ImageBuffer& ref) {
  detail::require_space(x, ColorSpace::Srgb8, "psnr");
  detail::require_space(ref, ColorSpace::Srgb8, "psnr");
  if (!x.same_shape(ref)) throw ContractViolation("psnr: dimension mismatch");
  double sum_sq = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double diff = x.data[i] - ref.data[i];
    sum_sq += diff * diff;
  }
  double mse = sum_sq / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(10.0 * std::log10(255.0 * 255.0 / mse), kPsnrCap);
}

namespace detail {

// Normalised 11-tap Gaussian used on both axes of the SSIM window.
inline std::vector<double> ssim_window_1d() {
  std::vector<double> w(kSsimWindow);
  const int half = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    double t = static_cast<double>(i - half);
    w[i] = std::exp(-(t * t) / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable weighted sum, valid region only: output is
// (w-10) x (h-10) for the 11-tap window.
inline std::vector<double> ssim_blur_valid(const std::vector<double>& plane,
                                           int w, int h,
                                           const std::vector<double>& win,
                                           int* out_w, int* out_h) {
  const int taps = static_cast<int>(win.size());
  const int vw = w - taps + 1;
  const int vh = h - taps + 1;
  std::vector<double> horiz(static_cast<size_t>(vw) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < taps; ++k) acc += win[k] * plane[y * w + x + k];
      horiz[y * vw + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(vw) * vh);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double acc = 0.0;
      for (int k = 0; k < taps; ++k) acc += win[k] * horiz[(y + k) * vw + x];
      out[y * vw + x] = acc;
    }
  *out_w = vw;
  *out_h = vh;
  return out;
}

}  // namespace detail

// Mean structural similarity on the luminance channel. Windows fully inside
// the image only; images smaller than the window are rejected.
inline double ssim(const ImageBuffer& x, const ImageBuffer& ref) {
  if (!x.same_shape(ref)) throw ContractViolation("ssim: dimension mismatch");
  if (x.width < kSsimWindow || x.height < kSsimWindow)
    throw ContractViolation("ssim: image smaller than the filter window");

  ImageBuffer gx = to_gray(x);
  ImageBuffer gy = to_gray(ref);
  const int w = x.width, h = x.height;
  const size_t n = static_cast<size_t>(w) * h;
  std::vector<double> xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xx[i] = gx.data[i] * gx.data[i];
    yy[i] = gy.data[i] * gy.data[i];
    xy[i] = gx.data[i] * gy.data[i];
  }

  const std::vector<double> win = detail::ssim_window_1d();
  int vw = 0, vh = 0;
  std::vector<double> mu1 = detail::ssim_blur_valid(gx.data, w, h, win, &vw, &vh);
  std::vector<double> mu2 = detail::ssim_blur_valid(gy.data, w, h, win, &vw, &vh);
  std::vector<double> m11 = detail::ssim_blur_valid(xx, w, h, win, &vw, &vh);
  std::vector<double> m22 = detail::ssim_blur_valid(yy, w, h, win, &vw, &vh);
  std::vector<double> m12 = detail::ssim_blur_valid(xy, w, h, win, &vw, &vh);

  double total = 0.0;
  const size_t count = static_cast<size_t>(vw) * vh;
  for (size_t i = 0; i < count; ++i) {
    double var1 = m11[i] - mu1[i] * mu1[i];
    double var2 = m22[i] - mu2[i] * mu2[i];
    double cov = m12[i] - mu1[i] * mu2[i];
    double num = (2.0 * mu1[i] * mu2[i] + kSsimC1) * (2.0 * cov + kSsimC2);
    double den = (mu1[i] * mu1[i] + mu2[i] * mu2[i] + kSsimC1) *
                 (var1 + var2 + kSsimC2);
    total += num / den;
  }
  return total / static_cast<double>(count);
}

}  // namespace flare
