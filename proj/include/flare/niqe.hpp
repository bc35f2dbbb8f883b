#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flare/error.hpp"
#include "flare/image.hpp"
#include "flare/version.hpp"

namespace flare {

inline constexpr int kNiqeFeatureDim = 36;
inline constexpr int kNiqeDefaultPatch = 96;
inline constexpr double kNiqeDefaultSharpness = 0.75;
inline constexpr double kNiqeEigFloor = 1e-10;

// Learned statistics of undistorted image patches: feature mean, feature
// covariance, and the patch geometry they were computed with.
struct NiqeModel {
  Eigen::VectorXd mean;        // 36 entries
  Eigen::MatrixXd covariance;  // 36 x 36, symmetric PSD
  int patch_size = kNiqeDefaultPatch;
  double sharpness_threshold = kNiqeDefaultSharpness;
};

namespace detail {

// 7-tap Gaussian (sigma 7/6), unit sum, used for the local mean and variance
// fields of the coefficient normalisation.
inline const std::vector<double>& niqe_window7() {
  static const std::vector<double> win = [] {
    std::vector<double> w(7);
    const double sigma = 7.0 / 6.0;
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) {
      double t = static_cast<double>(i - 3);
      w[i] = std::exp(-(t * t) / (2.0 * sigma * sigma));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return win;
}

// Separable weighted blur with replicated borders on a raw plane.
inline std::vector<double> niqe_blur(const std::vector<double>& plane, int w,
                                     int h, const std::vector<double>& win) {
  const int half = static_cast<int>(win.size()) / 2;
  std::vector<double> tmp(plane.size()), out(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        int xs = std::clamp(x + k, 0, w - 1);
        acc += win[k + half] * plane[y * w + xs];
      }
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -half; k <= half; ++k) {
        int ys = std::clamp(y + k, 0, h - 1);
        acc += win[k + half] * tmp[ys * w + x];
      }
      out[y * w + x] = acc;
    }
  return out;
}

struct MscnPlanes {
  std::vector<double> mscn;   // normalised coefficients
  std::vector<double> sigma;  // local deviation field (before the +1)
};

// Mean-subtracted contrast-normalised coefficients,
// (I - mu) / (sigma + 1), with the unit stabiliser in the denominator.
inline MscnPlanes compute_mscn(const std::vector<double>& plane, int w, int h) {
  const std::vector<double>& win = niqe_window7();
  std::vector<double> mu = niqe_blur(plane, w, h, win);
  std::vector<double> sq(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) sq[i] = plane[i] * plane[i];
  std::vector<double> musq = niqe_blur(sq, w, h, win);

  MscnPlanes out;
  out.mscn.resize(plane.size());
  out.sigma.resize(plane.size());
  for (size_t i = 0; i < plane.size(); ++i) {
    double var = musq[i] - mu[i] * mu[i];
    out.sigma[i] = std::sqrt(std::abs(var));
    out.mscn[i] = (plane[i] - mu[i]) / (out.sigma[i] + 1.0);
  }
  return out;
}

// 2x2 box-average downsample; both dimensions must be even.
inline std::vector<double> box_downsample2(const std::vector<double>& plane,
                                           int w, int h) {
  std::vector<double> out(static_cast<size_t>(w / 2) * (h / 2));
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w / 2; ++x)
      out[y * (w / 2) + x] =
          (plane[(2 * y) * w + 2 * x] + plane[(2 * y) * w + 2 * x + 1] +
           plane[(2 * y + 1) * w + 2 * x] + plane[(2 * y + 1) * w + 2 * x + 1]) /
          4.0;
  return out;
}

// Moment-ratio lookup grids shared by the two distribution fits. The shape
// grid runs 0.2..10 in steps of 0.001.
struct GammaGrids {
  std::vector<double> shape;      // candidate shape values
  std::vector<double> ggd_ratio;  // G(1/g)G(3/g)/G(2/g)^2
  std::vector<double> aggd_ratio; // G(2/a)^2/(G(1/a)G(3/a))
};

inline const GammaGrids& gamma_grids() {
  static const GammaGrids grids = [] {
    GammaGrids g;
    const int n = 9801;
    g.shape.resize(n);
    g.ggd_ratio.resize(n);
    g.aggd_ratio.resize(n);
    for (int i = 0; i < n; ++i) {
      double gam = 0.2 + 0.001 * i;
      double g1 = std::tgamma(1.0 / gam);
      double g2 = std::tgamma(2.0 / gam);
      double g3 = std::tgamma(3.0 / gam);
      g.shape[i] = gam;
      g.ggd_ratio[i] = g1 * g3 / (g2 * g2);
      g.aggd_ratio[i] = g2 * g2 / (g1 * g3);
    }
    return g;
  }();
  return grids;
}

struct GgdFit {
  double shape;
  double sigma_sq;
};

// Generalised Gaussian moment matching: match sigma^2/E|x|^2 against the
// tabulated ratio. Near-zero energy falls back to the Gaussian shape.
inline GgdFit fit_ggd(const std::vector<double>& x) {
  double sum_sq = 0.0, sum_abs = 0.0;
  for (double v : x) {
    sum_sq += v * v;
    sum_abs += std::abs(v);
  }
  const double n = static_cast<double>(x.size());
  double sigma_sq = sum_sq / n;
  double e_abs = sum_abs / n;
  if (e_abs < 1e-12) return {2.0, 0.0};

  double rho = sigma_sq / (e_abs * e_abs);
  const GammaGrids& g = gamma_grids();
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < g.shape.size(); ++i) {
    double diff = g.ggd_ratio[i] - rho;
    double err = diff * diff;
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(i);
    }
  }
  return {g.shape[best], sigma_sq};
}

struct AggdFit {
  double shape;
  double mean;
  double left_var;
  double right_var;
};

// Asymmetric generalised Gaussian moment matching on a pairwise-product
// sample. One-sided or all-zero samples fall back to the Gaussian shape with
// zero mean, keeping features finite on degenerate patches.
inline AggdFit fit_aggd(const std::vector<double>& x) {
  double left_sq = 0.0, right_sq = 0.0;
  size_t n_left = 0, n_right = 0;
  double sum_sq = 0.0, sum_abs = 0.0;
  for (double v : x) {
    sum_sq += v * v;
    sum_abs += std::abs(v);
    if (v < 0.0) {
      left_sq += v * v;
      ++n_left;
    } else if (v > 0.0) {
      right_sq += v * v;
      ++n_right;
    }
  }
  double left_var = n_left ? left_sq / static_cast<double>(n_left) : 0.0;
  double right_var = n_right ? right_sq / static_cast<double>(n_right) : 0.0;
  const double n = static_cast<double>(x.size());
  if (n_left == 0 || n_right == 0 || sum_abs / n < 1e-12)
    return {2.0, 0.0, left_var, right_var};

  double left_std = std::sqrt(left_var);
  double right_std = std::sqrt(right_var);
  double gamma_hat = left_std / right_std;
  double rhat = (sum_abs / n) * (sum_abs / n) / (sum_sq / n);
  double rhat_norm = rhat * (gamma_hat * gamma_hat * gamma_hat + 1.0) *
                     (gamma_hat + 1.0) /
                     ((gamma_hat * gamma_hat + 1.0) * (gamma_hat * gamma_hat + 1.0));

  const GammaGrids& g = gamma_grids();
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < g.shape.size(); ++i) {
    double diff = g.aggd_ratio[i] - rhat_norm;
    double err = diff * diff;
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(i);
    }
  }
  double alpha = g.shape[best];
  double g1 = std::tgamma(1.0 / alpha);
  double g2 = std::tgamma(2.0 / alpha);
  double g3 = std::tgamma(3.0 / alpha);
  double mean = (right_std - left_std) * (g2 / g1) * std::sqrt(g1 / g3);
  return {alpha, mean, left_var, right_var};
}

// Neighbour-shift offsets for the four orientation products: horizontal,
// vertical, main diagonal, secondary diagonal. Shifts wrap inside the patch.
inline constexpr int kNiqeShifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};

// The 18 per-patch features of one scale: GGD (shape, variance) of the
// coefficients themselves, then AGGD (shape, mean, left/right variance) for
// each orientation product.
inline void patch_features_18(const std::vector<double>& mscn, int img_w,
                              int x0, int y0, int p, double* out) {
  std::vector<double> block(static_cast<size_t>(p) * p);
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x)
      block[y * p + x] = mscn[(y0 + y) * img_w + (x0 + x)];

  GgdFit g = fit_ggd(block);
  out[0] = g.shape;
  out[1] = g.sigma_sq;

  std::vector<double> prod(block.size());
  for (int s = 0; s < 4; ++s) {
    const int dy = kNiqeShifts[s][0], dx = kNiqeShifts[s][1];
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        int ys = (y - dy + p) % p;
        int xs = (x - dx + p) % p;
        prod[y * p + x] = block[y * p + x] * block[ys * p + xs];
      }
    AggdFit a = fit_aggd(prod);
    out[2 + 4 * s + 0] = a.shape;
    out[2 + 4 * s + 1] = a.mean;
    out[2 + 4 * s + 2] = a.left_var;
    out[2 + 4 * s + 3] = a.right_var;
  }
}

inline std::vector<double> niqe_gray_plane(const ImageBuffer& img, int* w,
                                           int* h) {
  *w = img.width;
  *h = img.height;
  if (img.channels == 3) return to_gray(img).data;
  if (img.channels == 1) return img.data;
  throw ContractViolation("niqe: expected 1 or 3 channel input");
}

inline void niqe_check_patch(int patch_size) {
  if (patch_size < 6 || patch_size % 2 != 0)
    throw ContractViolation("niqe: patch_size must be even and >= 6");
}

// Feature matrix (rows = patches, 36 columns) plus the per-patch sharpness
// used for training-time patch selection.
inline void image_patch_features(const ImageBuffer& img, int patch_size,
                                 Eigen::MatrixXd* features,
                                 Eigen::VectorXd* sharpness) {
  niqe_check_patch(patch_size);
  int w = 0, h = 0;
  std::vector<double> plane = niqe_gray_plane(img, &w, &h);
  if (w < 2 * patch_size || h < 2 * patch_size)
    throw ContractViolation("niqe: image smaller than 2x patch_size");

  const int nx = w / patch_size;
  const int ny = h / patch_size;
  const int cw = nx * patch_size;
  const int ch = ny * patch_size;
  std::vector<double> cropped(static_cast<size_t>(cw) * ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) cropped[y * cw + x] = plane[y * w + x];

  const int n_patches = nx * ny;
  features->resize(n_patches, kNiqeFeatureDim);
  sharpness->resize(n_patches);

  std::vector<double> current = cropped;
  int cur_w = cw, cur_h = ch;
  for (int scale = 0; scale < 2; ++scale) {
    const int p = patch_size >> scale;
    MscnPlanes planes = compute_mscn(current, cur_w, cur_h);
    for (int gy = 0; gy < ny; ++gy)
      for (int gx = 0; gx < nx; ++gx) {
        const int idx = gy * nx + gx;
        double feat[18];
        patch_features_18(planes.mscn, cur_w, gx * p, gy * p, p, feat);
        for (int k = 0; k < 18; ++k) (*features)(idx, 18 * scale + k) = feat[k];
        if (scale == 0) {
          double acc = 0.0;
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
              acc += planes.sigma[(gy * p + y) * cur_w + (gx * p + x)];
          (*sharpness)(idx) = acc / static_cast<double>(p * p);
        }
      }
    if (scale == 0) {
      current = box_downsample2(current, cur_w, cur_h);
      cur_w /= 2;
      cur_h /= 2;
    }
  }
}

inline void niqe_validate(const NiqeModel& model) {
  if (model.mean.size() != kNiqeFeatureDim)
    throw ConfigError("niqe model: mean must have 36 entries");
  if (model.covariance.rows() != kNiqeFeatureDim ||
      model.covariance.cols() != kNiqeFeatureDim)
    throw ConfigError("niqe model: covariance must be 36x36");
  if (model.patch_size < 6 || model.patch_size % 2 != 0)
    throw ConfigError("niqe model: patch_size must be even and >= 6");
  if (!(model.sharpness_threshold >= 0.0 && model.sharpness_threshold <= 1.0))
    throw ConfigError("niqe model: sharpness_threshold must be in [0,1]");
  if (!model.mean.allFinite() || !model.covariance.allFinite())
    throw ConfigError("niqe model: non-finite entries");
  double asym = (model.covariance - model.covariance.transpose())
                    .cwiseAbs()
                    .maxCoeff();
  if (asym > 1e-12) throw ConfigError("niqe model: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.covariance);
  if (es.eigenvalues().minCoeff() < -kNiqeEigFloor)
    throw ConfigError("niqe model: covariance has negative eigenvalues");
}

}  // namespace detail

// Patch-wise natural-scene-statistics features: 18 per scale at two scales.
// Rows follow the patch grid in row-major order.
inline Eigen::MatrixXd niqe_features(const ImageBuffer& img,
                                     int patch_size = kNiqeDefaultPatch) {
  Eigen::MatrixXd feats;
  Eigen::VectorXd sharp;
  detail::image_patch_features(img, patch_size, &feats, &sharp);
  return feats;
}

// Trainer core operating on cached per-image features, so cross-validation
// loops (which train on n-1 images) do not recompute feature extraction and
// are not bound by the corpus-size floor of niqe_train. Patch selection
// keeps patches whose sharpness is >= threshold * (that image's max
// sharpness).
inline NiqeModel niqe_train_from_features(
    const std::vector<Eigen::MatrixXd>& per_image_features,
    const std::vector<Eigen::VectorXd>& per_image_sharpness, int patch_size,
    double sharpness_threshold, int* n_selected = nullptr) {
  detail::niqe_check_patch(patch_size);
  if (!(sharpness_threshold >= 0.0 && sharpness_threshold <= 1.0))
    throw ContractViolation("niqe_train: sharpness_threshold must be in [0,1]");
  if (per_image_features.empty())
    throw ContractViolation("niqe_train: no feature sets supplied");
  if (per_image_features.size() != per_image_sharpness.size())
    throw ContractViolation("niqe_train: feature/sharpness count mismatch");

  std::vector<Eigen::RowVectorXd> selected;
  for (size_t i = 0; i < per_image_features.size(); ++i) {
    const Eigen::MatrixXd& f = per_image_features[i];
    const Eigen::VectorXd& s = per_image_sharpness[i];
    if (f.rows() != s.size() || f.cols() != kNiqeFeatureDim)
      throw ContractViolation("niqe_train: malformed cached features");
    double cutoff = sharpness_threshold * s.maxCoeff();
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      if (s(r) >= cutoff) selected.push_back(f.row(r));
  }
  if (selected.size() < 100)
    throw ContractViolation("niqe_train: fewer than 100 surviving patches");
  if (n_selected) *n_selected = static_cast<int>(selected.size());

  const Eigen::Index n = static_cast<Eigen::Index>(selected.size());
  Eigen::MatrixXd x(n, kNiqeFeatureDim);
  for (Eigen::Index r = 0; r < n; ++r) x.row(r) = selected[r];

  NiqeModel model;
  model.patch_size = patch_size;
  model.sharpness_threshold = sharpness_threshold;
  model.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  model.covariance =
      centered.transpose() * centered / static_cast<double>(n - 1);
  detail::niqe_validate(model);
  return model;
}

// Fit the undistorted-image statistics from a corpus of images.
inline NiqeModel niqe_train(const std::vector<ImageBuffer>& pristine,
                            int patch_size = kNiqeDefaultPatch,
                            double sharpness_threshold = kNiqeDefaultSharpness) {
  if (pristine.size() < 10)
    throw ContractViolation("niqe_train: need at least 10 images");
  std::vector<Eigen::MatrixXd> feats(pristine.size());
  std::vector<Eigen::VectorXd> sharp(pristine.size());
  for (size_t i = 0; i < pristine.size(); ++i)
    detail::image_patch_features(pristine[i], patch_size, &feats[i], &sharp[i]);
  return niqe_train_from_features(feats, sharp, patch_size, sharpness_threshold);
}

// Distance between the model statistics and the statistics of a feature
// matrix, using the symmetric pseudo-inverse of the averaged covariance.
inline double niqe_score_from_features(const Eigen::MatrixXd& features,
                                       const NiqeModel& model) {
  if (features.cols() != kNiqeFeatureDim)
    throw ContractViolation("niqe_score: features must have 36 columns");
  if (features.rows() < 2)
    throw NumericError("niqe_score: need at least 2 patches");
  if (!features.allFinite())
    throw NumericError("niqe_score: non-finite features");

  Eigen::VectorXd mu = features.colwise().mean();
  Eigen::MatrixXd centered = features.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered /
                        static_cast<double>(features.rows() - 1);

  Eigen::MatrixXd avg = (model.covariance + cov) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(avg);
  if (es.info() != Eigen::Success)
    throw NumericError("niqe_score: eigendecomposition failed");
  Eigen::VectorXd inv_eig = es.eigenvalues();
  for (Eigen::Index i = 0; i < inv_eig.size(); ++i)
    inv_eig(i) = inv_eig(i) > kNiqeEigFloor ? 1.0 / inv_eig(i) : 0.0;

  Eigen::VectorXd delta = model.mean - mu;
  Eigen::VectorXd proj = es.eigenvectors().transpose() * delta;
  double dist_sq = (proj.array().square() * inv_eig.array()).sum();
  return std::sqrt(std::max(dist_sq, 0.0));
}

inline double niqe_score(const ImageBuffer& img, const NiqeModel& model) {
  detail::niqe_validate(model);
  return niqe_score_from_features(niqe_features(img, model.patch_size), model);
}

// JSON container: {version, patch_size, threshold, mean[36],
// covariance[1296] row-major}. Doubles are written with enough precision to
// reload bit-exactly.
inline void niqe_save(const NiqeModel& model, const std::string& path) {
  detail::niqe_validate(model);
  nlohmann::json j;
  j["version"] = version();
  j["patch_size"] = model.patch_size;
  j["threshold"] = model.sharpness_threshold;
  j["mean"] = std::vector<double>(model.mean.data(),
                                  model.mean.data() + model.mean.size());
  std::vector<double> cov;
  cov.reserve(kNiqeFeatureDim * kNiqeFeatureDim);
  for (int r = 0; r < kNiqeFeatureDim; ++r)
    for (int c = 0; c < kNiqeFeatureDim; ++c) cov.push_back(model.covariance(r, c));
  j["covariance"] = cov;

  std::ofstream out(path);
  if (!out) throw IoError("niqe_save: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("niqe_save: write failed for " + path);
}

inline NiqeModel niqe_load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("niqe_load: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("niqe_load: parse error in " + path + ": " + e.what());
  }
  NiqeModel model;
  try {
    model.patch_size = j.at("patch_size").get<int>();
    model.sharpness_threshold = j.at("threshold").get<double>();
    std::vector<double> mean = j.at("mean").get<std::vector<double>>();
    std::vector<double> cov = j.at("covariance").get<std::vector<double>>();
    if (mean.size() != kNiqeFeatureDim ||
        cov.size() != kNiqeFeatureDim * kNiqeFeatureDim)
      throw ConfigError("niqe model: wrong mean/covariance size");
    model.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), kNiqeFeatureDim);
    model.covariance.resize(kNiqeFeatureDim, kNiqeFeatureDim);
    for (int r = 0; r < kNiqeFeatureDim; ++r)
      for (int c = 0; c < kNiqeFeatureDim; ++c)
        model.covariance(r, c) = cov[r * kNiqeFeatureDim + c];
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("niqe model: missing or mistyped field: " +
                      std::string(e.what()));
  }
  detail::niqe_validate(model);
  return model;
}

}  // namespace flare
