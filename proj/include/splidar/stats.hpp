#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "splidar/math.hpp"
#include "splidar/scene.hpp"

namespace splidar {

/// Poisson probability mass, computed in the log domain.
inline double poisson_pmf(std::uint64_t k, double mean) {
  if (mean == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(-mean + static_cast<double>(k) * std::log(mean) -
                  std::lgamma(static_cast<double>(k) + 1.0));
}

/// Upper 1% chi-square quantile via the Wilson-Hilferty approximation
/// (accurate to ~0.1% for df >= 5, plenty for goodness-of-fit gating).
inline double chi2_critical_99(int df) {
  if (df < 1) throw std::invalid_argument("chi2_critical_99: df must be >= 1");
  const double z99 = 2.3263478740408408;  // standard normal 99% quantile
  const double d = static_cast<double>(df);
  const double term = 1.0 - 2.0 / (9.0 * d) + z99 * std::sqrt(2.0 / (9.0 * d));
  return d * term * term * term;
}

/// Asymptotic Kolmogorov-Smirnov critical value at the 1% level.
inline double ks_critical_1pct(std::size_t n) {
  return 1.62762 / std::sqrt(static_cast<double>(n));
}

/// Sup-distance between the empirical CDF of `samples` and `cdf`.
/// Sorts a copy; cdf must be nondecreasing on the sample range.
template <typename Cdf>
double ks_statistic(std::vector<double> samples, const Cdf& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    sup = std::max(sup, std::abs(f - static_cast<double>(i) / n));
    sup = std::max(sup, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return sup;
}

struct Chi2Gof {
  double statistic = 0.0;
  int df = 0;
  double critical_1pct = 0.0;
  bool passed = false;
};

/// Pearson chi-square fit of observed counts against Poisson(mean).
/// Adjacent cells are merged until every expected count reaches 5.
inline Chi2Gof chi2_poisson_gof(std::span<const std::uint64_t> draws,
                                double mean) {
  if (draws.empty()) throw std::invalid_argument("chi2_poisson_gof: no draws");
  std::uint64_t max_k = 0;
  for (std::uint64_t d : draws) max_k = std::max(max_k, d);

  std::vector<double> observed(max_k + 2, 0.0);
  for (std::uint64_t d : draws) observed[d] += 1.0;
  const double n = static_cast<double>(draws.size());
  std::vector<double> expected(max_k + 2, 0.0);
  double tail = 1.0;
  for (std::uint64_t k = 0; k <= max_k; ++k) {
    const double p = poisson_pmf(k, mean);
    expected[k] = n * p;
    tail -= p;
  }
  expected[max_k + 1] = n * std::max(tail, 0.0);  // everything above max_k

  // Merge left-to-right so every cell has expected >= 5.
  std::vector<double> obs_m, exp_m;
  double obs_acc = 0.0, exp_acc = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) {
    obs_acc += observed[k];
    exp_acc += expected[k];
    if (exp_acc >= 5.0) {
      obs_m.push_back(obs_acc);
      exp_m.push_back(exp_acc);
      obs_acc = exp_acc = 0.0;
    }
  }
  if (exp_acc > 0.0 || obs_acc > 0.0) {
    if (exp_m.empty()) throw std::invalid_argument("chi2_poisson_gof: degenerate binning");
    obs_m.back() += obs_acc;
    exp_m.back() += exp_acc;
  }

  Chi2Gof out;
  for (std::size_t i = 0; i < obs_m.size(); ++i) {
    const double d = obs_m[i] - exp_m[i];
    out.statistic += d * d / exp_m[i];
  }
  out.df = static_cast<int>(obs_m.size()) - 1;
  out.critical_1pct = chi2_critical_99(out.df);
  out.passed = out.statistic < out.critical_1pct;
  return out;
}

/// CDF of a Gaussian truncated to [lo, hi].
inline double truncated_gaussian_cdf(double t, double mu, double sigma,
                                     double lo, double hi) {
  if (t <= lo) return 0.0;
  if (t >= hi) return 1.0;
  const double a = normal_cdf((lo - mu) / sigma);
  const double b = normal_cdf((hi - mu) / sigma);
  return (normal_cdf((t - mu) / sigma) - a) / (b - a);
}

/// CDF of the detected first-photon timestamp: signal/noise mixture with
/// weight eta*alpha*S/Lambda, the signal branch a Gaussian at the delay
/// (jitter folded into its width) truncated to the period by redrawing.
inline double first_photon_cdf(const PixelScene& scene, double jitter_sigma,
                               double t) {
  const double t_r = scene.acq.repetition_period;
  if (t <= 0.0) return 0.0;
  if (t >= t_r) return 1.0;
  const double p_signal = scene.signal_energy() / scene.cycle_energy();
  const double sigma_eff = std::sqrt(scene.pulse.width * scene.pulse.width +
                                     jitter_sigma * jitter_sigma);
  return p_signal *
             truncated_gaussian_cdf(t, scene.delay, sigma_eff, 0.0, t_r) +
         (1.0 - p_signal) * t / t_r;
}

}  // namespace splidar
