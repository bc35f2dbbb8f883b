// Copyright (c) 2026 the flare authors. MIT license, see LICENSE.

#include <cmath>
#include <random>
#include <utility>

#include <Eigen/Dense>
#include <catch2/catch_amalgamated.hpp>

#include "flare/error.hpp"
#include "flare/gp.hpp"
#include "flare/lbfgsb.hpp"

namespace {

flare::GpHyperparams make_hyp(std::initializer_list<double> ls, double sf2,
                              double sn2) {
  flare::GpHyperparams hyp;
  hyp.lengthscales = Eigen::VectorXd(static_cast<Eigen::Index>(ls.size()));
  Eigen::Index i = 0;
  for (double v : ls) hyp.lengthscales(i++) = v;
  hyp.signal_variance = sf2;
  hyp.noise_variance = sn2;
  return hyp;
}

// Draw a function from a known squared-exponential GP on the unit square so
// the fit has a ground truth to recover.
struct RecoveryData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  flare::GpModel fitted;
};

const RecoveryData& recovery_data() {
  static const RecoveryData data = [] {
    const int n = 150, d = 2;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    RecoveryData r;
    r.x.resize(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) r.x(i, j) = u(rng);

    flare::GpHyperparams hyp = make_hyp({0.3, 0.3}, 1.0, 1e-4);
    Eigen::MatrixXd k = flare::detail::kernel_matrix(
        r.x, hyp, flare::KernelKind::SquaredExponential);
    k.diagonal().array() += 1e-8;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (int i = 0; i < n; ++i) z(i) = gauss(rng);
    r.y = llt.matrixL() * z;
    std::normal_distribution<double> obs_noise(0.0, 0.01);
    for (int i = 0; i < n; ++i) r.y(i) += obs_noise(rng);

    r.fitted = flare::gp_fit(r.x, r.y);
    return r;
  }();
  return data;
}

}  // namespace

TEST_CASE("kernel fixtures and symmetry") {
  flare::GpHyperparams hyp = make_hyp({0.7}, 2.5, 0.01);
  Eigen::VectorXd a(1), b(1);
  a << 0.3;
  b << 0.3;
  CHECK(flare::kernel(a, a, hyp) == 2.5);
  b << 1.0;  // exactly one lengthscale away
  CHECK(flare::kernel(a, b, hyp) ==
        Catch::Approx(2.5 * std::exp(-0.5)).margin(1e-12));
  CHECK(flare::kernel(a, b, hyp) == flare::kernel(b, a, hyp));

  // Matern 5/2 at r = 1: sf2 (1 + sqrt5 + 5/3) exp(-sqrt5).
  double s5 = std::sqrt(5.0);
  double expected = 2.5 * (1.0 + s5 + 5.0 / 3.0) * std::exp(-s5);
  CHECK(flare::kernel(a, b, hyp, flare::KernelKind::Matern52) ==
        Catch::Approx(expected).margin(1e-12));

  // Per-dimension scaling: diffs of one lengthscale each give r^2 = 2.
  flare::GpHyperparams hyp2 = make_hyp({0.5, 2.0}, 1.7, 0.01);
  Eigen::VectorXd p(2), q(2);
  p << 0.1, 3.0;
  q << 0.6, 1.0;
  CHECK(flare::kernel(p, q, hyp2) ==
        Catch::Approx(1.7 * std::exp(-1.0)).margin(1e-12));

  CHECK_THROWS_AS(flare::kernel(a, p, hyp), flare::ContractViolation);
  flare::GpHyperparams bad = make_hyp({-0.5}, 1.0, 0.01);
  CHECK_THROWS_AS(flare::kernel(a, b, bad), flare::ContractViolation);
}

TEST_CASE("Cholesky factor reconstructs the covariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 12, d = 3;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = u(rng);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = u(rng) - 0.5;

  flare::GpHyperparams hyp = make_hyp({0.4, 0.6, 0.8}, 1.7, 0.01);
  flare::GpModel model = flare::gp_build(x, y, hyp);

  Eigen::MatrixXd k = flare::detail::kernel_matrix(
      x, hyp, flare::KernelKind::SquaredExponential);
  k.diagonal().array() += hyp.noise_variance + model.jitter;
  Eigen::MatrixXd rebuilt = model.chol * model.chol.transpose();
  double rel = (rebuilt - k).norm() / k.norm();
  CHECK(rel <= 1e-8);
}

TEST_CASE("predict interpolates the training data under tiny noise") {
  Eigen::MatrixXd x(5, 1);
  x << 0.05, 0.3, 0.5, 0.75, 0.95;
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) y(i) = std::sin(2.0 * M_PI * x(i, 0));
  flare::GpModel m = flare::gp_build(x, y, make_hyp({0.5}, 1.0, 1e-6));
  for (int i = 0; i < 5; ++i) {
    auto [mean, var] = flare::predict(m, x.row(i).transpose());
    CHECK(std::abs(mean - y(i)) <= 1e-3);
    CHECK(var >= 0.0);
    CHECK(var <= 2e-6);
  }
}

TEST_CASE("predict reverts to the prior far from the data") {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.1, 0.2;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 1.5;
  flare::GpModel m = flare::gp_build(x, y, make_hyp({0.02}, 1.3, 1e-4));
  Eigen::VectorXd far(1);
  far << 0.9;
  auto [mean, var] = flare::predict(m, far);
  CHECK(std::abs(mean) <= 1e-8);
  CHECK(var == Catch::Approx(1.3).margin(1e-8));
}

TEST_CASE("predict matches a dense-solve oracle on three points") {
  Eigen::MatrixXd x(3, 1);
  x << 0.1, 0.5, 0.8;
  Eigen::VectorXd y(3);
  y << 1.0, -0.5, 0.3;
  flare::GpHyperparams hyp = make_hyp({0.3}, 1.2, 0.05);
  flare::GpModel m = flare::gp_build(x, y, hyp);
  REQUIRE(m.jitter == 0.0);

  Eigen::VectorXd q(1);
  q << 0.4;
  Eigen::MatrixXd k(3, 3);
  Eigen::VectorXd k_star(3);
  for (int i = 0; i < 3; ++i) {
    k_star(i) = flare::kernel(x.row(i).transpose(), q, hyp);
    for (int j = 0; j < 3; ++j)
      k(i, j) = flare::kernel(x.row(i).transpose(), x.row(j).transpose(), hyp);
  }
  k.diagonal().array() += hyp.noise_variance;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  double mean_oracle = k_star.dot(lu.solve(y));
  double var_oracle = hyp.signal_variance - k_star.dot(lu.solve(k_star));

  auto [mean, var] = flare::predict(m, q);
  CHECK(mean == Catch::Approx(mean_oracle).margin(1e-8));
  CHECK(var == Catch::Approx(var_oracle).margin(1e-8));

  Eigen::VectorXd wrong_dim(2);
  wrong_dim << 0.4, 0.4;
  CHECK_THROWS_AS(flare::predict(m, wrong_dim), flare::ContractViolation);
}

TEST_CASE("log marginal likelihood matches a dense-solve oracle") {
  Eigen::MatrixXd x(4, 1);
  x << 0.1, 0.35, 0.6, 0.9;
  Eigen::VectorXd y(4);
  y << 0.4, -0.2, 0.9, 0.1;
  flare::GpHyperparams hyp = make_hyp({0.25}, 0.8, 0.02);

  Eigen::MatrixXd k(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      k(i, j) = flare::kernel(x.row(i).transpose(), x.row(j).transpose(), hyp);
  k.diagonal().array() += hyp.noise_variance;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  double oracle = -0.5 * y.dot(lu.solve(y)) - 0.5 * std::log(lu.determinant()) -
                  0.5 * 4.0 * std::log(2.0 * M_PI);

  CHECK(flare::log_marginal_likelihood(x, y, hyp) ==
        Catch::Approx(oracle).margin(1e-8));
}

TEST_CASE("gp_build rejects malformed inputs") {
  Eigen::MatrixXd x(3, 1);
  x << 0.1, 0.5, 0.8;
  Eigen::VectorXd y(3);
  y << 1.0, -0.5, 0.3;
  flare::GpHyperparams hyp = make_hyp({0.3}, 1.2, 0.05);

  Eigen::VectorXd short_y(2);
  short_y << 1.0, 2.0;
  CHECK_THROWS_AS(flare::gp_build(x, short_y, hyp), flare::ContractViolation);

  Eigen::VectorXd bad_y = y;
  bad_y(1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(flare::gp_build(x, bad_y, hyp), flare::ContractViolation);

  CHECK_THROWS_AS(flare::gp_build(x, y, make_hyp({0.3, 0.3}, 1.0, 0.01)),
                  flare::ContractViolation);
  CHECK_THROWS_AS(flare::gp_build(x, y, make_hyp({0.3}, -1.0, 0.01)),
                  flare::ContractViolation);
}

TEST_CASE("duplicated training points factor cleanly") {
  Eigen::MatrixXd x(4, 1);
  x << 0.2, 0.2, 0.6, 0.9;
  Eigen::VectorXd y(4);
  y << 1.0, 1.0, -0.5, 0.3;
  flare::GpModel m;
  REQUIRE_NOTHROW(m = flare::gp_build(x, y, make_hyp({0.3}, 1.0, 1e-6)));
  Eigen::VectorXd q(1);
  q << 0.2;
  auto [mean, var] = flare::predict(m, q);
  CHECK(std::isfinite(mean));
  CHECK(mean == Catch::Approx(1.0).margin(1e-3));
  CHECK(var >= 0.0);
}

TEST_CASE("fit recovers a known lengthscale within a factor of two") {
  const flare::GpModel& m = recovery_data().fitted;
  for (int j = 0; j < 2; ++j) {
    CHECK(m.lengthscales(j) >= 0.15);
    CHECK(m.lengthscales(j) <= 0.6);
  }
  CHECK(m.signal_variance >= 0.25);
  CHECK(m.signal_variance <= 4.0);
  CHECK(m.noise_variance <= 1e-2);
}

TEST_CASE("fitted hyperparameters respect the search bounds") {
  const flare::GpModel& m = recovery_data().fitted;
  for (int j = 0; j < 2; ++j) {
    CHECK(m.lengthscales(j) >= flare::kGpLengthscaleMin);
    CHECK(m.lengthscales(j) <= flare::kGpLengthscaleMax);
  }
  CHECK(m.signal_variance >= flare::kGpSignalVarMin);
  CHECK(m.signal_variance <= flare::kGpSignalVarMax);
  CHECK(m.noise_variance >= flare::kGpNoiseVarMin);
  CHECK(m.noise_variance <= flare::kGpNoiseVarMax);
}

TEST_CASE("fitted likelihood beats random hyperparameter draws") {
  const RecoveryData& data = recovery_data();
  flare::GpHyperparams fitted;
  fitted.lengthscales = data.fitted.lengthscales;
  fitted.signal_variance = data.fitted.signal_variance;
  fitted.noise_variance = data.fitted.noise_variance;
  double fitted_mll = flare::log_marginal_likelihood(data.x, data.y, fitted);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + u(rng) * (std::log(hi) - std::log(lo)));
  };
  for (int trial = 0; trial < 16; ++trial) {
    flare::GpHyperparams draw = make_hyp(
        {log_uniform(flare::kGpLengthscaleMin, flare::kGpLengthscaleMax),
         log_uniform(flare::kGpLengthscaleMin, flare::kGpLengthscaleMax)},
        log_uniform(flare::kGpSignalVarMin, flare::kGpSignalVarMax),
        log_uniform(flare::kGpNoiseVarMin, flare::kGpNoiseVarMax));
    double mll = flare::log_marginal_likelihood(data.x, data.y, draw);
    CHECK(fitted_mll + 1e-9 >= mll);
  }
}

TEST_CASE("pure noise is absorbed by the noise term") {
  const int n = 60;
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 0.5);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = u(rng);
    y(i) = gauss(rng);
  }
  double sample_var = (y.array() - y.mean()).square().sum() / (n - 1);

  flare::GpModel m = flare::gp_fit(x, y);
  CHECK(m.noise_variance >= 0.5 * sample_var);
  CHECK(m.noise_variance <= 2.0 * sample_var);
  CHECK(m.signal_variance <= 0.1);

  // With the variance in the noise term the posterior mean stays close to
  // the prior between observations instead of chasing the samples.
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd q(1);
    q(0) = (i + 0.5) / 20.0;
    worst = std::max(worst, std::abs(flare::predict(m, q).first));
  }
  CHECK(worst <= 0.15);
}

TEST_CASE("gp_fit rejects malformed inputs") {
  Eigen::MatrixXd one(1, 1);
  one << 0.5;
  Eigen::VectorXd one_y(1);
  one_y << 1.0;
  CHECK_THROWS_AS(flare::gp_fit(one, one_y), flare::ContractViolation);

  Eigen::MatrixXd x(3, 1);
  x << 0.1, 0.5, 0.8;
  Eigen::VectorXd y(3);
  y << 1.0, -0.5, 0.3;

  Eigen::VectorXd bad_y = y;
  bad_y(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(flare::gp_fit(x, bad_y), flare::ContractViolation);

  Eigen::MatrixXd outside = x;
  outside(2, 0) = 1.2;
  CHECK_THROWS_AS(flare::gp_fit(outside, y), flare::ContractViolation);

  CHECK_THROWS_AS(
      flare::gp_fit(x, y, flare::KernelKind::SquaredExponential, 0),
      flare::ContractViolation);
}

TEST_CASE("bounded minimiser solves a quadratic bowl") {
  Eigen::VectorXd centre(2);
  centre << 0.3, 0.7;
  flare::BoundedObjective bowl = [&](const Eigen::VectorXd& p,
                                     Eigen::VectorXd* g) {
    Eigen::VectorXd diff = p - centre;
    if (g) *g = 2.0 * diff;
    return diff.squaredNorm();
  };
  Eigen::VectorXd x0(2), lo(2), hi(2);
  x0 << 0.9, 0.1;
  lo << 0.0, 0.0;
  hi << 1.0, 1.0;
  flare::LbfgsbResult r = flare::lbfgsb_minimize(bowl, x0, lo, hi);
  CHECK(r.converged);
  CHECK((r.x - centre).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(r.fx <= 1e-10);
}

TEST_CASE("bounded minimiser lands on the active boundary") {
  Eigen::VectorXd centre(2);
  centre << 1.5, 0.5;
  flare::BoundedObjective bowl = [&](const Eigen::VectorXd& p,
                                     Eigen::VectorXd* g) {
    Eigen::VectorXd diff = p - centre;
    if (g) *g = 2.0 * diff;
    return diff.squaredNorm();
  };
  Eigen::VectorXd x0(2), lo(2), hi(2);
  x0 << 0.2, 0.2;
  lo << 0.0, 0.0;
  hi << 1.0, 1.0;
  flare::LbfgsbResult r = flare::lbfgsb_minimize(bowl, x0, lo, hi);
  CHECK(std::abs(r.x(0) - 1.0) <= 1e-8);
  CHECK(std::abs(r.x(1) - 0.5) <= 1e-6);
}

TEST_CASE("bounded minimiser solves Rosenbrock") {
  flare::BoundedObjective rosen = [](const Eigen::VectorXd& p,
                                     Eigen::VectorXd* g) {
    double a = p(0), b = p(1);
    double f = (1 - a) * (1 - a) + 100.0 * (b - a * a) * (b - a * a);
    if (g) {
      (*g)(0) = -2.0 * (1 - a) - 400.0 * a * (b - a * a);
      (*g)(1) = 200.0 * (b - a * a);
    }
    return f;
  };
  Eigen::VectorXd x0(2), lo(2), hi(2);
  x0 << -1.2, 1.0;
  lo << -2.0, -2.0;
  hi << 2.0, 2.0;
  flare::LbfgsbOptions opts;
  opts.max_iterations = 1000;
  flare::LbfgsbResult r = flare::lbfgsb_minimize(rosen, x0, lo, hi, opts);
  CHECK(r.fx <= 1e-10);
  CHECK(std::abs(r.x(0) - 1.0) <= 1e-5);
  CHECK(std::abs(r.x(1) - 1.0) <= 1e-5);
}

TEST_CASE("bounded minimiser rejects malformed boxes") {
  flare::BoundedObjective f = [](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
    if (g) g->setZero();
    return 0.0;
  };
  Eigen::VectorXd x0(2), lo(2), hi(2);
  x0 << 0.5, 0.5;
  lo << 0.0, 0.6;
  hi << 1.0, 0.4;
  CHECK_THROWS_AS(flare::lbfgsb_minimize(f, x0, lo, hi),
                  flare::ContractViolation);
  Eigen::VectorXd lo1(1);
  lo1 << 0.0;
  CHECK_THROWS_AS(flare::lbfgsb_minimize(f, x0, lo1, hi),
                  flare::ContractViolation);
}
