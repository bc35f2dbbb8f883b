#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "flare/error.hpp"

namespace flare {

inline constexpr int kNumParams = 8;

// The eight optimised enhancement parameters. The canonical vector order is
// (alpha, beta, gamma, h, sigma_s, lambda, d, h_c) and is shared by trace
// records, CSV columns and the unit-hypercube mapping.
struct ParamVector {
  double alpha = 1.0;    // contrast scale
  double beta = 0.0;     // brightness offset, 8-bit intensity units
  double gamma = 1.0;    // tone-curve exponent
  double h = 1.0;        // NLM luminance strength
  double sigma_s = 0.0;  // post-smoothing std-dev, pixels
  double lambda = 0.0;   // illumination-normalisation exponent
  double d = 0.0;        // bilateral diameter, pixels (continuous)
  double h_c = 0.0;      // chrominance strength

  double operator[](size_t i) const {
    switch (i) {
      case 0: return alpha;
      case 1: return beta;
      case 2: return gamma;
      case 3: return h;
      case 4: return sigma_s;
      case 5: return lambda;
      case 6: return d;
      case 7: return h_c;
    }
    throw ContractViolation("ParamVector: index out of range");
  }
  double& operator[](size_t i) {
    switch (i) {
      case 0: return alpha;
      case 1: return beta;
      case 2: return gamma;
      case 3: return h;
      case 4: return sigma_s;
      case 5: return lambda;
      case 6: return d;
      case 7: return h_c;
    }
    throw ContractViolation("ParamVector: index out of range");
  }
};

inline constexpr std::array<const char*, kNumParams> kParamNames = {
    "alpha", "beta", "gamma", "h", "sigma_s", "lambda", "d", "h_c"};

// Per-parameter (min, max) search box. Defaults are the published bounds:
// alpha [0.5,5], beta [-20,50], gamma [0.1,2], h [1,50], sigma_s [0,1.5],
// lambda [0,0.6], d [0,15], h_c [0,40].
struct ParamBounds {
  std::array<double, kNumParams> min = {0.5, -20.0, 0.1, 1.0, 0.0, 0.0, 0.0, 0.0};
  std::array<double, kNumParams> max = {5.0, 50.0, 2.0, 50.0, 1.5, 0.6, 15.0, 40.0};

  void validate() const {
    for (int i = 0; i < kNumParams; ++i)
      if (!(min[i] < max[i]))
        throw ConfigError(std::string("ParamBounds: min < max violated for ") +
                          kParamNames[i]);
  }

  bool contains(const ParamVector& p) const {
    for (int i = 0; i < kNumParams; ++i)
      if (p[i] < min[i] || p[i] > max[i]) return false;
    return true;
  }

  // Throws naming the first violating parameter.
  void require(const ParamVector& p) const {
    for (int i = 0; i < kNumParams; ++i)
      if (p[i] < min[i] || p[i] > max[i])
        throw ContractViolation(
            std::string("parameter ") + kParamNames[i] + "=" +
            std::to_string(p[i]) + " outside bounds [" +
            std::to_string(min[i]) + ", " + std::to_string(max[i]) + "]");
  }
};

}  // namespace flare
