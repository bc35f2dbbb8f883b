#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "flare/error.hpp"
#include "flare/image.hpp"
#include "flare/parallel.hpp"

namespace flare {

// Mean over a (2r+1)^2 window with replicated borders, computed as two 1-D
// sliding-window passes.
inline ImageBuffer box_filter(const ImageBuffer& src, int radius) {
  if (src.channels != 1) throw ContractViolation("box_filter: expected 1 channel");
  if (radius < 1) throw ContractViolation("box_filter: radius must be >= 1");
  const int w = src.width, h = src.height;
  const double inv = 1.0 / (2 * radius + 1);

  ImageBuffer tmp(w, h, 1, src.space);
  for (int y = 0; y < h; ++y) {
    const double* row = &src.data[static_cast<size_t>(y) * w];
    double* out = &tmp.data[static_cast<size_t>(y) * w];
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += row[std::clamp(k, 0, w - 1)];
    out[0] = acc * inv;
    for (int x = 1; x < w; ++x) {
      acc += row[std::clamp(x + radius, 0, w - 1)];
      acc -= row[std::clamp(x - radius - 1, 0, w - 1)];
      out[x] = acc * inv;
    }
  }
  ImageBuffer dst(w, h, 1, src.space);
  for (int x = 0; x < w; ++x) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k)
      acc += tmp.data[static_cast<size_t>(std::clamp(k, 0, h - 1)) * w + x];
    dst.data[x] = acc * inv;
    for (int y = 1; y < h; ++y) {
      acc += tmp.data[static_cast<size_t>(std::clamp(y + radius, 0, h - 1)) * w + x];
      acc -= tmp.data[static_cast<size_t>(std::clamp(y - radius - 1, 0, h - 1)) * w + x];
      dst.data[static_cast<size_t>(y) * w + x] = acc * inv;
    }
  }
  return dst;
}

// He et al. guided filter on single-channel planes, linear-time box-filter
// formulation, replicated borders.
inline ImageBuffer guided_filter(const ImageBuffer& guide, const ImageBuffer& src,
                                 int radius, double eps) {
  if (guide.channels != 1 || src.channels != 1)
    throw ContractViolation("guided_filter: expected 1-channel guide and src");
  if (!guide.same_shape(src))
    throw ContractViolation("guided_filter: guide/src size mismatch");
  if (radius < 1) throw ContractViolation("guided_filter: radius must be >= 1");
  if (!(eps > 0)) throw ContractViolation("guided_filter: eps must be > 0");

  const size_t n = guide.size();
  ImageBuffer ip(guide.width, guide.height, 1, guide.space);
  ImageBuffer ii(guide.width, guide.height, 1, guide.space);
  for (size_t i = 0; i < n; ++i) {
    ip.data[i] = guide.data[i] * src.data[i];
    ii.data[i] = guide.data[i] * guide.data[i];
  }
  ImageBuffer mean_i = box_filter(guide, radius);
  ImageBuffer mean_p = box_filter(src, radius);
  ImageBuffer mean_ip = box_filter(ip, radius);
  ImageBuffer mean_ii = box_filter(ii, radius);

  ImageBuffer a(guide.width, guide.height, 1, guide.space);
  ImageBuffer b(guide.width, guide.height, 1, guide.space);
  for (size_t i = 0; i < n; ++i) {
    double var_i = mean_ii.data[i] - mean_i.data[i] * mean_i.data[i];
    double cov_ip = mean_ip.data[i] - mean_i.data[i] * mean_p.data[i];
    a.data[i] = cov_ip / (var_i + eps);
    b.data[i] = mean_p.data[i] - a.data[i] * mean_i.data[i];
  }
  ImageBuffer mean_a = box_filter(a, radius);
  ImageBuffer mean_b = box_filter(b, radius);

  ImageBuffer out(guide.width, guide.height, 1, src.space);
  for (size_t i = 0; i < n; ++i)
    out.data[i] = mean_a.data[i] * guide.data[i] + mean_b.data[i];
  return out;
}

// k x k median on a single plane, replicated borders. k must be odd, >= 3.
inline ImageBuffer median_filter(const ImageBuffer& src, int k) {
  if (src.channels != 1) throw ContractViolation("median_filter: expected 1 channel");
  if (k < 3 || k % 2 == 0)
    throw ContractViolation("median_filter: kernel must be odd and >= 3");
  const int r = k / 2;
  ImageBuffer out(src.width, src.height, 1, src.space);
  parallel_for(src.height, [&](int y) {
    std::vector<double> window;
    window.reserve(static_cast<size_t>(k) * k);
    for (int x = 0; x < src.width; ++x) {
      window.clear();
      for (int oy = -r; oy <= r; ++oy)
        for (int ox = -r; ox <= r; ++ox)
          window.push_back(src.at_clamped(y + oy, x + ox));
      auto mid = window.begin() + window.size() / 2;
      std::nth_element(window.begin(), mid, window.end());
      out.at(y, x) = *mid;
    }
  });
  return out;
}

// Separable Gaussian blur, kernel half-width ceil(3*sigma), kernel normalised
// to sum 1, replicated borders. Works on any channel count.
inline ImageBuffer gaussian_blur(const ImageBuffer& src, double sigma) {
  if (!(sigma > 0)) throw ContractViolation("gaussian_blur: sigma must be > 0");
  const int m = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * m + 1);
  double sum = 0.0;
  for (int i = -m; i <= m; ++i) {
    kernel[i + m] = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    sum += kernel[i + m];
  }
  for (double& v : kernel) v /= sum;

  const int w = src.width, h = src.height, c = src.channels;
  ImageBuffer tmp(w, h, c, src.space);
  parallel_for(h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -m; i <= m; ++i)
          acc += kernel[i + m] * src.at(y, std::clamp(x + i, 0, w - 1), ch);
        tmp.at(y, x, ch) = acc;
      }
  });
  ImageBuffer dst(w, h, c, src.space);
  parallel_for(h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -m; i <= m; ++i)
          acc += kernel[i + m] * tmp.at(std::clamp(y + i, 0, h - 1), x, ch);
        dst.at(y, x, ch) = acc;
      }
  });
  return dst;
}

// Returns the 1-D Gaussian kernel gaussian_blur uses, for inspection.
inline std::vector<double> gaussian_kernel_1d(double sigma) {
  const int m = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * m + 1);
  double sum = 0.0;
  for (int i = -m; i <= m; ++i) {
    kernel[i + m] = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    sum += kernel[i + m];
  }
  for (double& v : kernel) v /= sum;
  return kernel;
}

// Bilateral filter on a 3-channel image. The neighbourhood is the disc of
// offsets with |offset| <= diameter/2; the radiometric weight is a Gaussian of
// the Euclidean RGB distance; neighbour reads replicate the border. Offsets
// are visited in row-major order so the result is reproducible operation for
// operation by a direct double-loop evaluation of the same definition.
inline ImageBuffer bilateral_filter(const ImageBuffer& src, int diameter,
                                    double sigma_spatial, double sigma_range) {
  if (src.channels != 3) throw ContractViolation("bilateral_filter: expected 3 channels");
  if (diameter < 1) throw ContractViolation("bilateral_filter: diameter must be >= 1");

  const double half = diameter / 2.0;
  const int reach = diameter / 2;
  struct Offset { int oy, ox; double ws; };
  std::vector<Offset> offsets;
  for (int oy = -reach; oy <= reach; ++oy)
    for (int ox = -reach; ox <= reach; ++ox) {
      double dist2 = static_cast<double>(oy) * oy + static_cast<double>(ox) * ox;
      if (std::sqrt(dist2) <= half)
        offsets.push_back({oy, ox,
                           std::exp(-dist2 / (2.0 * sigma_spatial * sigma_spatial))});
    }

  const double inv_2sr2 = 1.0 / (2.0 * sigma_range * sigma_range);
  ImageBuffer out(src.width, src.height, 3, src.space);
  parallel_for(src.height, [&](int y) {
    for (int x = 0; x < src.width; ++x) {
      double cr = src.at(y, x, 0), cg = src.at(y, x, 1), cb = src.at(y, x, 2);
      double num_r = 0.0, num_g = 0.0, num_b = 0.0, den = 0.0;
      for (const Offset& o : offsets) {
        double r = src.at_clamped(y + o.oy, x + o.ox, 0);
        double g = src.at_clamped(y + o.oy, x + o.ox, 1);
        double b = src.at_clamped(y + o.oy, x + o.ox, 2);
        double d2 = (r - cr) * (r - cr) + (g - cg) * (g - cg) + (b - cb) * (b - cb);
        double wgt = o.ws * std::exp(-d2 * inv_2sr2);
        num_r += wgt * r;
        num_g += wgt * g;
        num_b += wgt * b;
        den += wgt;
      }
      out.at(y, x, 0) = num_r / den;
      out.at(y, x, 1) = num_g / den;
      out.at(y, x, 2) = num_b / den;
    }
  });
  return out;
}

// Non-local means on a single plane. Patch distance is the mean squared
// difference over a (2*patch_radius+1)^2 template with replicated borders;
// the search window is clipped at the image edge; weights exp(-d2/strength^2)
// are normalised to sum 1 per pixel. Search pixels are visited in row-major
// order, matching a direct quadruple-loop evaluation of the same definition.
inline ImageBuffer nlm_filter_plane(const ImageBuffer& src, double strength,
                                    int patch_radius = 3, int search_radius = 10) {
  if (src.channels != 1) throw ContractViolation("nlm_filter_plane: expected 1 channel");
  if (!(strength > 0)) throw ContractViolation("nlm_filter_plane: strength must be > 0");

  const int w = src.width, h = src.height;
  const int pr = patch_radius, sr = search_radius;
  const double patch_count = static_cast<double>((2 * pr + 1) * (2 * pr + 1));
  const double inv_h2 = 1.0 / (strength * strength);
  ImageBuffer out(w, h, 1, src.space);

  parallel_for(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const int sy0 = std::max(0, y - sr), sy1 = std::min(h - 1, y + sr);
      const int sx0 = std::max(0, x - sr), sx1 = std::min(w - 1, x + sr);
      double num = 0.0, den = 0.0;
      for (int sy = sy0; sy <= sy1; ++sy)
        for (int sx = sx0; sx <= sx1; ++sx) {
          double d2 = 0.0;
          if (y >= pr && y < h - pr && x >= pr && x < w - pr &&
              sy >= pr && sy < h - pr && sx >= pr && sx < w - pr) {
            for (int py = -pr; py <= pr; ++py) {
              const double* a = &src.data[static_cast<size_t>(y + py) * w + (x - pr)];
              const double* b = &src.data[static_cast<size_t>(sy + py) * w + (sx - pr)];
              for (int px = 0; px <= 2 * pr; ++px) {
                double diff = a[px] - b[px];
                d2 += diff * diff;
              }
            }
          } else {
            for (int py = -pr; py <= pr; ++py)
              for (int px = -pr; px <= pr; ++px) {
                double diff = src.at_clamped(y + py, x + px) -
                              src.at_clamped(sy + py, sx + px);
                d2 += diff * diff;
              }
          }
          double wgt = std::exp(-(d2 / patch_count) * inv_h2);
          num += wgt * src.at(sy, sx);
          den += wgt;
        }
      out.at(y, x) = num / den;
    }
  });
  return out;
}

}  // namespace flare
