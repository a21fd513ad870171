#pragma once

// Linear least-squares toy: y = a + b x + e with e ~ N(0, p / S), fitted in
// closed form, V evaluated in-sample against the noiseless line.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "steady/errors.hpp"
#include "steady/mock_hardware.hpp"

namespace steady {

struct LsqConfig {
  double p = 0.25;
  int pulses = 32;
  int shots = 16;  // 0 = noiseless
  int trials = 1000;
  double a = 0.3;
  double b = 0.7;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(p >= 0.0)) throw ConfigError("lsq: p must be >= 0");
    if (pulses < 3) throw ConfigError("lsq: need at least 3 points");
    if (shots < 0 || trials < 1) throw ConfigError("lsq: shots >= 0, trials >= 1");
  }
};

struct LsqTrial {
  double a_hat = 0.0;
  double b_hat = 0.0;
  double v_opt = 0.0;
  double intercept_term = 0.0;  // ebar^2
  double slope_term = 0.0;      // sigma_xe^2 / sigma_xx
};

struct LsqSummary {
  double mean_v = 0.0;
  double mean_intercept_term = 0.0;
  double mean_slope_term = 0.0;
  double sigma2 = 0.0;
  /// p / (P S): the leading ebar^2 term alone.
  double approx_expectation = 0.0;
  /// 2 sigma^2 / P: projection of the noise onto span{1, x}.
  double exact_expectation = 0.0;
  std::vector<LsqTrial> trials;
};

inline LsqTrial lsq_fit(const std::vector<double>& x, const std::vector<double>& y, double a0,
                        double b0) {
  const auto n = static_cast<double>(x.size());
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw NumericalError("lsq_fit: degenerate abscissae");
  LsqTrial t;
  t.b_hat = sxy / sxx;
  t.a_hat = ym - t.b_hat * xm;
  double v = 0.0, ebar = 0.0, sxe = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double y0 = a0 + b0 * x[i];
    const double r = y0 - t.a_hat - t.b_hat * x[i];
    v += r * r;
    const double e = y[i] - y0;
    ebar += e;
    sxe += (x[i] - xm) * e;
  }
  ebar /= n;
  t.v_opt = v / n;
  t.intercept_term = ebar * ebar;
  t.slope_term = sxe * sxe / (sxx * n);
  return t;
}

inline LsqSummary lsq_monte_carlo(const LsqConfig& cfg) {
  cfg.validate();
  LsqSummary out;
  out.sigma2 = cfg.shots == 0 ? 0.0 : cfg.p / cfg.shots;
  out.approx_expectation = out.sigma2 / cfg.pulses;
  out.exact_expectation = 2.0 * out.sigma2 / cfg.pulses;
  const double sigma = std::sqrt(out.sigma2);
  std::vector<double> x(static_cast<std::size_t>(cfg.pulses));
  std::vector<double> y(x.size());
  for (int k = 0; k < cfg.trials; ++k) {
    auto rng = substream(cfg.seed, static_cast<std::uint64_t>(k), kStreamFit);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = ux(rng);
      y[i] = cfg.a + cfg.b * x[i] + sigma * noise(rng);
    }
    const LsqTrial t = lsq_fit(x, y, cfg.a, cfg.b);
    out.mean_v += t.v_opt;
    out.mean_intercept_term += t.intercept_term;
    out.mean_slope_term += t.slope_term;
    out.trials.push_back(t);
  }
  out.mean_v /= cfg.trials;
  out.mean_intercept_term /= cfg.trials;
  out.mean_slope_term /= cfg.trials;
  return out;
}

}  // namespace steady
