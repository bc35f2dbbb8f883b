#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>

#include "flare/error.hpp"

namespace flare {

// Objective callback: returns f(x) and writes the gradient into *grad.
using BoundedObjective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsbOptions {
  int max_iterations = 100;
  int history = 8;            // stored curvature pairs
  double pg_tolerance = 1e-8; // stop on projected-gradient infinity norm
  double f_tolerance = 1e-12; // stop on relative objective decrease
  int max_backtracks = 30;
};

struct LbfgsbResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline Eigen::VectorXd project_box(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace detail

// Box-constrained minimisation: limited-memory BFGS directions with
// projection onto the box and Armijo backtracking. Suited to the smooth,
// low-dimensional problems here (marginal-likelihood and acquisition
// surfaces); not a general nonsmooth solver.
inline LbfgsbResult lbfgsb_minimize(const BoundedObjective& f,
                                    const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& lo,
                                    const Eigen::VectorXd& hi,
                                    const LbfgsbOptions& opts = {}) {
  const Eigen::Index dim = x0.size();
  if (lo.size() != dim || hi.size() != dim)
    throw ContractViolation("lbfgsb_minimize: bound dimension mismatch");
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(lo(i) <= hi(i)))
      throw ContractViolation("lbfgsb_minimize: lower bound above upper bound");

  LbfgsbResult res;
  res.x = detail::project_box(x0, lo, hi);
  Eigen::VectorXd grad(dim);
  res.fx = f(res.x, &grad);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  const double c1 = 1e-4;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    res.iterations = iter + 1;
    Eigen::VectorXd pg = res.x - detail::project_box(res.x - grad, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() < opts.pg_tolerance) {
      res.converged = true;
      return res;
    }

    // Two-loop recursion over the stored curvature pairs.
    Eigen::VectorXd dir = -grad;
    const int k = static_cast<int>(s_hist.size());
    bool from_memory = k > 0;
    std::vector<double> alpha_coef(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha_coef[i] = rho_hist[i] * s_hist[i].dot(dir);
      dir -= alpha_coef[i] * y_hist[i];
    }
    if (k > 0) {
      double gamma = s_hist.back().dot(y_hist.back()) /
                     y_hist.back().dot(y_hist.back());
      dir *= gamma;
    }
    for (int i = 0; i < k; ++i) {
      double beta = rho_hist[i] * y_hist[i].dot(dir);
      dir += (alpha_coef[i] - beta) * s_hist[i];
    }
    if (grad.dot(dir) >= 0.0) {  // not a descent direction
      dir = -grad;
      from_memory = false;
    }

    // Backtracking on the projected path.
    double step = 1.0;
    Eigen::VectorXd x_new;
    double f_new = res.fx;
    Eigen::VectorXd g_new(dim);
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      x_new = detail::project_box(res.x + step * dir, lo, hi);
      Eigen::VectorXd delta = x_new - res.x;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = f(x_new, &g_new);
      if (f_new <= res.fx + c1 * grad.dot(delta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // A stale quasi-Newton direction can defeat the line search even when
      // plain descent would work; drop the memory and retry once before
      // concluding the iterate cannot improve.
      if (from_memory) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      res.converged = true;  // no progress possible from here
      return res;
    }

    Eigen::VectorXd s = x_new - res.x;
    Eigen::VectorXd y = g_new - grad;
    double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    double decrease = res.fx - f_new;
    res.x = x_new;
    res.fx = f_new;
    grad = g_new;
    if (decrease <= opts.f_tolerance * (std::abs(res.fx) + 1.0)) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

}  // namespace flare
