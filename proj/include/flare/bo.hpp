#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "flare/error.hpp"
#include "flare/gp.hpp"
#include "flare/image.hpp"
#include "flare/lbfgsb.hpp"
#include "flare/metrics.hpp"
#include "flare/niqe.hpp"
#include "flare/params.hpp"
#include "flare/pipeline.hpp"
#include "flare/sobol.hpp"

namespace flare {

inline constexpr double kStandardiseEpsilon = 1e-6;
inline constexpr double kAcquisitionVarianceFloor = 1e-12;
inline constexpr double kAcquisitionFdStep = 1e-5;
inline constexpr int kAcquisitionProbes = 256;

struct BoConfig {
  int n_init = 16;
  int n_total = 50;
  int acquisition_restarts = 8;
  uint64_t seed = 0;
  bool baseline_mode = false;
  KernelKind kernel = KernelKind::SquaredExponential;

  void validate() const {
    if (!(2 <= n_init && n_init < n_total))
      throw ConfigError("bo: requires 2 <= n_init < n_total");
    if (acquisition_restarts < 1)
      throw ConfigError("bo: acquisition_restarts must be >= 1");
  }
};

// One evaluated candidate: its unit-cube location, the raw objective, and
// the unscaled parameters it corresponds to.
struct Observation {
  Eigen::VectorXd point;
  double raw_objective = 0.0;
  ParamVector theta;
};

// Map parameters onto the unit hypercube, dimension by dimension.
inline Eigen::VectorXd scale_to_unit(const ParamVector& theta,
                                     const ParamBounds& bounds = {}) {
  bounds.require(theta);
  Eigen::VectorXd u(kNumParams);
  for (int i = 0; i < kNumParams; ++i)
    u(i) = (theta[i] - bounds.min[i]) / (bounds.max[i] - bounds.min[i]);
  return u;
}

// Inverse map; the result is clamped into the bounds so accumulated
// round-off at the box faces cannot produce out-of-range parameters.
inline ParamVector unscale_from_unit(const Eigen::VectorXd& u,
                                     const ParamBounds& bounds = {}) {
  if (u.size() != kNumParams)
    throw ContractViolation("unscale_from_unit: expected 8 coordinates");
  if (((u.array() < -1e-9) || (u.array() > 1.0 + 1e-9)).any())
    throw ContractViolation("unscale_from_unit: point outside unit cube");
  ParamVector theta;
  for (int i = 0; i < kNumParams; ++i) {
    double v = bounds.min[i] + u(i) * (bounds.max[i] - bounds.min[i]);
    theta[i] = std::clamp(v, bounds.min[i], bounds.max[i]);
  }
  return theta;
}

struct StandardiseResult {
  std::vector<double> values;
  double mean = 0.0;
  double std_dev = 0.0;  // population standard deviation
};

// Centre and scale raw objectives: (f - mean) / (sigma + epsilon), with the
// population sigma recomputed over everything observed so far.
inline StandardiseResult standardise(const std::vector<double>& raw) {
  if (raw.empty()) throw ContractViolation("standardise: need at least 1 value");
  StandardiseResult r;
  double sum = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw ContractViolation("standardise: non-finite value");
    sum += v;
  }
  r.mean = sum / static_cast<double>(raw.size());
  double ss = 0.0;
  for (double v : raw) ss += (v - r.mean) * (v - r.mean);
  r.std_dev = std::sqrt(ss / static_cast<double>(raw.size()));
  r.values.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    r.values[i] = (raw[i] - r.mean) / (r.std_dev + kStandardiseEpsilon);
  return r;
}

namespace detail {

// Scaled complementary error function for x >= 0: exp(x^2) erfc(x).
// Direct composition is exact enough below 20; beyond that erfc underflow
// forces the asymptotic series.
inline double erfcx_pos(double x) {
  if (x < 20.0) return std::exp(x * x) * std::erfc(x);
  const double inv_sqrt_pi = 0.56418958354775628695;
  double inv2x2 = 1.0 / (2.0 * x * x);
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 12; ++k) {
    term *= -(2.0 * k - 1.0) * inv2x2;
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum * inv_sqrt_pi / x;
}

// log(z Phi(z) + phi(z)) for z < 0, written so that neither phi underflow
// nor Phi/phi cancellation occurs: the bracket 1 - t sqrt(pi/2) erfcx(t/sqrt2)
// stays O(1/t^2) and is evaluated by series once t is large.
inline double log_h_negative(double z) {
  const double t = -z;
  const double half_log_2pi = 0.91893853320467274178;
  double log_bracket;
  if (t > 1e3) {
    double it2 = 1.0 / (t * t);
    log_bracket =
        -2.0 * std::log(t) + std::log1p((-3.0 + 15.0 * it2) * it2);
  } else {
    double q = std::sqrt(M_PI / 2.0) * erfcx_pos(t / std::sqrt(2.0));
    log_bracket = std::log1p(-t * q);
  }
  return -0.5 * t * t - half_log_2pi + log_bracket;
}

}  // namespace detail

// Logarithm of expected improvement for a maximisation problem:
// EI = sigma (z Phi(z) + phi(z)), z = (mean - best) / sigma. Finite for all
// sigma > 0; sigma == 0 degenerates to log of the plain improvement, where
// -inf is the correct answer for no improvement.
inline double log_ei(double mean, double variance, double best) {
  if (variance < 0.0) throw ContractViolation("log_ei: negative variance");
  if (variance == 0.0) return std::log(std::max(mean - best, 0.0));
  const double sigma = std::sqrt(variance);
  const double z = (mean - best) / sigma;
  if (z < 0.0) return std::log(sigma) + detail::log_h_negative(z);
  // Phi(z) via erfc of the negated argument keeps z >= 0 free of subtraction.
  double phi_cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
  double phi_pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return std::log(sigma) + std::log(z * phi_cdf + phi_pdf);
}

namespace detail {

inline double acquisition_at(const GpModel& model, double best_std,
                             const Eigen::VectorXd& x) {
  auto [mean, var] = predict(model, x);
  return log_ei(mean, std::max(var, kAcquisitionVarianceFloor), best_std);
}

}  // namespace detail

// Maximise LogEI over the unit box: quasi-Newton ascent from Sobol starts,
// with central-difference gradients, cross-checked against a fresh batch of
// Sobol probe points. The returned point is the best candidate seen, so it
// never scores below any probe.
inline Eigen::VectorXd maximise_acquisition(const GpModel& model,
                                            double best_std, int restarts,
                                            uint64_t seed) {
  const int dim = static_cast<int>(model.train_x.cols());
  if (restarts < 1)
    throw ContractViolation("maximise_acquisition: restarts must be >= 1");

  Eigen::VectorXd lo = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd hi = Eigen::VectorXd::Ones(dim);

  BoundedObjective neg_acq = [&](const Eigen::VectorXd& x,
                                 Eigen::VectorXd* grad) {
    double f = -detail::acquisition_at(model, best_std, x);
    if (grad) {
      grad->resize(dim);
      for (int i = 0; i < dim; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) = std::min(x(i) + kAcquisitionFdStep, 1.0);
        xm(i) = std::max(x(i) - kAcquisitionFdStep, 0.0);
        double fp = -detail::acquisition_at(model, best_std, xp);
        double fm = -detail::acquisition_at(model, best_std, xm);
        (*grad)(i) = (fp - fm) / (xp(i) - xm(i));
      }
    }
    return f;
  };

  Eigen::MatrixXd probes = sobol_points(kAcquisitionProbes, dim, seed ^ 0x50b0'1e5ull);
  Eigen::VectorXd best_x = probes.row(0).transpose();
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, int>> probe_rank(probes.rows());
  for (int i = 0; i < probes.rows(); ++i) {
    Eigen::VectorXd x = probes.row(i).transpose();
    double v = detail::acquisition_at(model, best_std, x);
    probe_rank[i] = {v, i};
    if (v > best_val) {
      best_val = v;
      best_x = x;
    }
  }
  std::partial_sort(probe_rank.begin(), probe_rank.begin() + 4,
                    probe_rank.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });

  // Ascend from the seeded Sobol starts, plus exploit-oriented starts: the
  // top probes, the best observed training point, and the posterior-mean
  // argmax reached from it. Without those the climbs rarely begin inside
  // the narrow high-EI basin that forms around the incumbent once the
  // surrogate is confident.
  Eigen::MatrixXd sobol_starts = sobol_points(restarts, dim, seed);
  std::vector<Eigen::VectorXd> starts;
  starts.reserve(static_cast<size_t>(restarts) + 6);
  for (int s = 0; s < restarts; ++s)
    starts.push_back(sobol_starts.row(s).transpose());
  for (int t = 0; t < 4; ++t)
    starts.push_back(probes.row(probe_rank[t].second).transpose());
  Eigen::Index inc_idx = 0;
  model.train_y.maxCoeff(&inc_idx);
  Eigen::VectorXd incumbent = model.train_x.row(inc_idx).transpose();
  starts.push_back(incumbent);
  {
    BoundedObjective neg_mean = [&](const Eigen::VectorXd& x,
                                    Eigen::VectorXd* grad) {
      double f = -predict(model, x).first;
      if (grad) {
        grad->resize(dim);
        for (int i = 0; i < dim; ++i) {
          Eigen::VectorXd xp = x, xm = x;
          xp(i) = std::min(x(i) + kAcquisitionFdStep, 1.0);
          xm(i) = std::max(x(i) - kAcquisitionFdStep, 0.0);
          (*grad)(i) = (-predict(model, xp).first + predict(model, xm).first) /
                       (xp(i) - xm(i));
        }
      }
      return f;
    };
    LbfgsbOptions mean_opts;
    mean_opts.max_iterations = 50;
    try {
      starts.push_back(
          lbfgsb_minimize(neg_mean, incumbent, lo, hi, mean_opts).x);
    } catch (const Error&) {
      // mean ascent is only a heuristic start; ignore failures
    }
  }

  LbfgsbOptions opts;
  opts.max_iterations = 50;
  for (const Eigen::VectorXd& s : starts) {
    try {
      LbfgsbResult r = lbfgsb_minimize(neg_acq, s, lo, hi, opts);
      double v = detail::acquisition_at(model, best_std, r.x);
      if (v > best_val) {
        best_val = v;
        best_x = r.x;
      }
    } catch (const Error&) {
      // A start that fails numerically is dropped; the probe maximum is
      // always available as a fallback.
    }
  }
  return best_x;
}

struct BoPointRecord {
  int iter = 0;
  Eigen::VectorXd point;
  double value = 0.0;
  double incumbent = 0.0;  // best raw value up to and including this entry
};

struct BoRunResult {
  Eigen::VectorXd best_point;
  double best_value = 0.0;
  std::vector<BoPointRecord> trace;
};

// The evaluate / standardise / fit / acquire loop over an arbitrary
// objective on the unit cube. Everything downstream (image optimisation,
// synthetic test objectives) funnels through this one engine.
inline BoRunResult run_bo(
    const std::function<double(const Eigen::VectorXd&)>& objective, int dim,
    const BoConfig& cfg) {
  cfg.validate();
  if (dim < 1 || dim > kSobolMaxDim)
    throw ConfigError("run_bo: dimension outside supported range");

  BoRunResult res;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> raw;
  points.reserve(cfg.n_total);
  raw.reserve(cfg.n_total);

  auto evaluate = [&](const Eigen::VectorXd& x, int iter) {
    double v = objective(x);
    if (!std::isfinite(v))
      throw NumericError("run_bo: objective returned a non-finite value");
    points.push_back(x);
    raw.push_back(v);
    BoPointRecord rec;
    rec.iter = iter;
    rec.point = x;
    rec.value = v;
    rec.incumbent = res.trace.empty()
                        ? v
                        : std::max(res.trace.back().incumbent, v);
    res.trace.push_back(rec);
  };

  Eigen::MatrixXd init = sobol_points(cfg.n_init, dim, cfg.seed);
  for (int i = 0; i < cfg.n_init; ++i)
    evaluate(init.row(i).transpose(), i);

  GpHyperparams prev_hyp;
  bool have_prev = false;
  for (int iter = cfg.n_init; iter < cfg.n_total; ++iter) {
    StandardiseResult std_res = standardise(raw);
    Eigen::MatrixXd x(points.size(), dim);
    Eigen::VectorXd y(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
      x.row(i) = points[i].transpose();
      y(i) = std_res.values[i];
    }
    GpModel model =
        gp_fit(x, y, cfg.kernel, kGpFitStarts, have_prev ? &prev_hyp : nullptr);
    prev_hyp.lengthscales = model.lengthscales;
    prev_hyp.signal_variance = model.signal_variance;
    prev_hyp.noise_variance = model.noise_variance;
    have_prev = true;
    double best_std = y.maxCoeff();
    uint64_t acq_seed = detail::splitmix64(cfg.seed ^ (0xac110ull + iter));
    Eigen::VectorXd next =
        maximise_acquisition(model, best_std, cfg.acquisition_restarts, acq_seed);
    evaluate(next, iter);
  }

  int best_idx = 0;
  for (size_t i = 1; i < raw.size(); ++i)
    if (raw[i] > raw[best_idx]) best_idx = static_cast<int>(i);
  res.best_point = points[best_idx];
  res.best_value = raw[best_idx];
  return res;
}

// One trace entry of a per-image optimisation run.
struct TraceRecord {
  int iter = 0;
  ParamVector theta;
  Eigen::VectorXd point;
  QualityReport report;
  double incumbent = 0.0;
};

struct OptimiseResult {
  ParamVector best_theta;
  QualityReport best_report;
  ImageBuffer best_image;
  std::vector<TraceRecord> trace;
};

namespace detail {

// Baseline mode pins the pipeline down to the three-parameter predecessor:
// tone curve plus luminance denoising only.
inline constexpr int kBaselineActiveDims[3] = {0, 1, 3};  // alpha, beta, h

inline ParamVector baseline_pinned(const ParamBounds& bounds) {
  ParamVector t;
  t.alpha = bounds.min[0];
  t.beta = bounds.min[1];
  t.gamma = 1.0;
  t.h = bounds.min[3];
  t.sigma_s = 0.0;
  t.lambda = 0.0;
  t.d = 0.0;
  t.h_c = 0.0;
  return t;
}

}  // namespace detail

// Per-image parameter search: n_init Sobol candidates, then GP/LogEI
// iterations until n_total evaluations. Scores are computed against the
// reference; the incumbent is tracked on raw objectives.
inline OptimiseResult optimise_image(const ImageBuffer& low,
                                     const ImageBuffer& ref,
                                     const NiqeModel& niqe_model,
                                     const BoConfig& cfg,
                                     const ParamBounds& bounds = {}) {
  cfg.validate();
  if (!low.same_shape(ref))
    throw ContractViolation("optimise_image: image size mismatch");
  detail::niqe_validate(niqe_model);
  bounds.validate();

  // In baseline mode only (alpha, beta, h) vary; the other five coordinates
  // are fixed at their pinned values in unit space.
  const bool baseline = cfg.baseline_mode;
  Eigen::VectorXd pinned_unit;
  if (baseline) pinned_unit = scale_to_unit(detail::baseline_pinned(bounds), bounds);
  const int dim = baseline ? 3 : kNumParams;

  auto unit_to_full = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    if (!baseline) return u;
    Eigen::VectorXd full = pinned_unit;
    for (int i = 0; i < 3; ++i) full(detail::kBaselineActiveDims[i]) = u(i);
    return full;
  };

  std::vector<QualityReport> reports;
  std::vector<ParamVector> thetas;
  std::vector<Eigen::VectorXd> full_points;
  auto objective = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd full = unit_to_full(u);
    ParamVector theta = unscale_from_unit(full, bounds);
    ImageBuffer enhanced = enhance(low, theta, bounds);
    QualityReport rep = QualityReport::from(
        psnr(enhanced, ref), ssim(enhanced, ref),
        niqe_score(enhanced, niqe_model));
    reports.push_back(rep);
    thetas.push_back(theta);
    full_points.push_back(full);
    return rep.objective;
  };

  BoRunResult run = run_bo(objective, dim, cfg);

  OptimiseResult out;
  out.trace.resize(run.trace.size());
  int best_idx = 0;
  for (size_t i = 0; i < run.trace.size(); ++i) {
    TraceRecord& t = out.trace[i];
    t.iter = run.trace[i].iter;
    t.theta = thetas[i];
    t.point = full_points[i];
    t.report = reports[i];
    t.incumbent = run.trace[i].incumbent;
    if (reports[i].objective > reports[best_idx].objective)
      best_idx = static_cast<int>(i);
  }
  out.best_theta = thetas[best_idx];
  out.best_report = reports[best_idx];
  out.best_image = enhance(low, out.best_theta, bounds);
  return out;
}

// JSON-lines trace export, one record per evaluation.
inline void write_trace(const std::vector<TraceRecord>& trace,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_trace: cannot open " + path);
  for (const TraceRecord& t : trace) {
    nlohmann::ordered_json j;
    j["iter"] = t.iter;
    nlohmann::ordered_json theta;
    for (int i = 0; i < kNumParams; ++i) theta[kParamNames[i]] = t.theta[i];
    j["theta"] = theta;
    j["point"] = std::vector<double>(t.point.data(),
                                      t.point.data() + t.point.size());
    j["psnr"] = t.report.psnr;
    j["ssim"] = t.report.ssim;
    j["niqe"] = t.report.niqe;
    j["objective"] = t.report.objective;
    j["incumbent"] = t.incumbent;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write_trace: write failed for " + path);
}

}  // namespace flare
