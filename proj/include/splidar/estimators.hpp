#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "splidar/math.hpp"
#include "splidar/scene.hpp"

namespace splidar {

enum class SolverStatus {
  kOk,
  kNoData,           ///< estimator needs at least one timestamp
  kBracketNotFound,  ///< derivative sign never changed within the budget
  kMaxIterations,    ///< iteration budget exhausted before convergence
};

/// Estimator output: the value, whether a physical constraint clamped it,
/// and root-finder diagnostics.
struct EstimateReport {
  double value = kNaN;
  bool clamped = false;
  int iterations = 0;
  std::pair<double, double> bracket{kNaN, kNaN};
  bool converged = false;
  SolverStatus status = SolverStatus::kOk;
};

/// Root-finder knobs shared by the likelihood solvers.
struct SolverConfig {
  double derivative_tolerance = 1e-6;  ///< |dL| threshold for `converged`
  int max_iterations = 200;            ///< bisection iterations
  double bracket_step = 0.0;           ///< depth bracket step; 0 = sigma_t/4
  int max_bracket_steps = 10000;       ///< depth bracket expansions
  double upper_bound_init = 10.0;      ///< reflectivity bisection upper bound
  int max_upper_doublings = 40;
};

namespace detail {

/// log s(x) computed in the log domain so far pulse tails do not underflow.
inline double log_pulse_value(const PulseShape& p, double x) {
  const double z = x / p.width;
  return std::log(p.energy) - 0.5 * z * z -
         std::log(p.width * std::sqrt(2.0 * kPi));
}

inline void check_loglik_args(std::size_t m, double alpha, double tau,
                              const PixelScene& scene) {
  if (!(alpha >= 0.0))
    throw std::invalid_argument("loglik: alpha must be >= 0");
  if (!(tau > 0.0 && tau < scene.acq.repetition_period))
    throw std::invalid_argument("loglik: tau must lie in (0, t_r)");
  if (alpha == 0.0 && scene.background_rate == 0.0 && m > 0)
    throw std::invalid_argument(
        "loglik: zero flux (alpha = 0, b_lambda = 0) cannot explain "
        "observed timestamps");
}

inline double clamp_delay(double tau, const PixelScene& scene) {
  const double t_r = scene.acq.repetition_period;
  const double margin = 1e-12 * t_r;
  return std::clamp(tau, margin, t_r - margin);
}

}  // namespace detail

/// Timestamp log-likelihood (constant terms dropped):
///   -N_r*eta*S*alpha + sum_k log(eta*alpha*s(t_k - tau) + b_lambda).
inline double loglik(std::span<const double> timestamps, double alpha,
                     double tau, const PixelScene& scene) {
  detail::check_loglik_args(timestamps.size(), alpha, tau, scene);
  const double eta = scene.acq.quantum_efficiency;
  const double b = scene.background_rate;
  double value = -scene.acq.repetitions * eta * scene.pulse.energy * alpha;
  for (double t : timestamps) {
    if (b == 0.0) {
      // log(eta*alpha*s) in the log domain; the pulse tail may underflow.
      value += std::log(eta * alpha) +
               detail::log_pulse_value(scene.pulse, t - tau);
    } else {
      value += std::log(eta * alpha * pulse_value(scene.pulse, t - tau) + b);
    }
  }
  return value;
}

/// d loglik / d tau:
///   sum_k eta*alpha*s(t_k-tau)*(t_k-tau)/sigma_t^2
///         / (eta*alpha*s(t_k-tau) + b_lambda).
inline double dloglik_dtau(std::span<const double> timestamps, double alpha,
                           double tau, const PixelScene& scene) {
  detail::check_loglik_args(timestamps.size(), alpha, tau, scene);
  const double eta = scene.acq.quantum_efficiency;
  const double b = scene.background_rate;
  const double inv_var = 1.0 / (scene.pulse.width * scene.pulse.width);
  double value = 0.0;
  for (double t : timestamps) {
    const double x = t - tau;
    if (b == 0.0) {
      value += x * inv_var;  // the pulse factor cancels exactly
    } else {
      const double signal = eta * alpha * pulse_value(scene.pulse, x);
      value += signal * x * inv_var / (signal + b);
    }
  }
  return value;
}

/// d loglik / d alpha:
///   -N_r*eta*S + sum_k eta*s(t_k-tau) / (eta*alpha*s(t_k-tau) + b_lambda);
/// strictly decreasing in alpha whenever m >= 1.
inline double dloglik_dalpha(std::span<const double> timestamps, double alpha,
                             double tau, const PixelScene& scene) {
  detail::check_loglik_args(timestamps.size(), alpha, tau, scene);
  const double eta = scene.acq.quantum_efficiency;
  const double b = scene.background_rate;
  double value = -scene.acq.repetitions * eta * scene.pulse.energy;
  for (double t : timestamps) {
    if (b == 0.0) {
      value += 1.0 / alpha;  // eta*s cancels exactly
    } else {
      const double pulse = eta * pulse_value(scene.pulse, t - tau);
      value += pulse / (alpha * pulse + b);
    }
  }
  return value;
}

/// Closed-form depth estimate for the noiseless model: the timestamp mean.
inline EstimateReport depth_sample_mean(std::span<const double> timestamps,
                                        const PixelScene& scene) {
  EstimateReport report;
  if (timestamps.empty()) {
    report.status = SolverStatus::kNoData;
    return report;
  }
  double sum = 0.0;
  for (double t : timestamps) sum += t;
  const double mean = sum / static_cast<double>(timestamps.size());
  const double clamped = detail::clamp_delay(mean, scene);
  report.value = clamped;
  report.clamped = clamped != mean;
  report.converged = true;
  return report;
}

/// Count-based reflectivity estimate: max{(m/N_r - B) / (eta*S), 0}.
inline EstimateReport reflectivity_count_mle(std::size_t m,
                                             const PixelScene& scene) {
  const double eta = scene.acq.quantum_efficiency;
  const double unconstrained =
      (static_cast<double>(m) / static_cast<double>(scene.acq.repetitions) -
       scene.background_energy()) /
      (eta * scene.pulse.energy);
  EstimateReport report;
  report.value = std::max(unconstrained, 0.0);
  report.clamped = unconstrained < 0.0;
  report.converged = true;
  return report;
}

namespace detail {

/// Sign of d loglik / d alpha at alpha = 0+, covering the b_lambda = 0 case
/// where the derivative diverges to +infinity.
inline int dalpha_sign_at_zero(std::span<const double> timestamps, double tau,
                               const PixelScene& scene) {
  if (scene.background_rate == 0.0)
    return timestamps.empty() ? -1 : +1;
  return sign_of(dloglik_dalpha(timestamps, 0.0, tau, scene));
}

}  // namespace detail

/// Depth estimate with known reflectivity: expands a bracket symmetrically
/// around tau_0 until the likelihood derivative changes sign, then bisects
/// to the zero crossing nearest the initial guess. Reports a bracket
/// failure when the expansion budget runs out without a sign change.
inline EstimateReport depth_mle_known_alpha(std::span<const double> timestamps,
                                            double alpha,
                                            const PixelScene& scene,
                                            double tau_init,
                                            const SolverConfig& cfg = {}) {
  EstimateReport report;
  if (timestamps.empty()) {
    report.status = SolverStatus::kNoData;
    return report;
  }
  if (!(alpha > 0.0) && scene.background_rate == 0.0)
    throw std::invalid_argument(
        "depth_mle_known_alpha: alpha or b_lambda must be positive");

  const double t_r = scene.acq.repetition_period;
  const double step =
      cfg.bracket_step > 0.0 ? cfg.bracket_step : scene.pulse.width / 4.0;
  const double lo_bound = 1e-12 * t_r;
  const double hi_bound = t_r - 1e-12 * t_r;
  const auto deriv = [&](double tau) {
    return dloglik_dtau(timestamps, alpha, tau, scene);
  };

  double lo = detail::clamp_delay(tau_init, scene);
  double hi = lo;
  int sign_lo = sign_of(deriv(lo));
  int sign_hi = sign_lo;
  if (sign_lo == 0) {  // landed exactly on a stationary point
    report.value = lo;
    report.bracket = {lo, hi};
    report.converged = true;
    return report;
  }

  int expansions = 0;
  while (sign_lo == sign_hi && expansions < cfg.max_bracket_steps) {
    const bool lo_free = lo > lo_bound;
    const bool hi_free = hi < hi_bound;
    if (!lo_free && !hi_free) break;
    if (lo_free) lo = std::max(lo_bound, lo - step);
    if (hi_free) hi = std::min(hi_bound, hi + step);
    sign_lo = sign_of(deriv(lo));
    sign_hi = sign_of(deriv(hi));
    ++expansions;
  }
  report.bracket = {lo, hi};
  report.iterations = expansions;
  if (sign_lo == sign_hi) {
    report.status = SolverStatus::kBracketNotFound;
    return report;
  }

  // Bisection; the derivative is continuous, so this always lands on a
  // crossing inside the bracket.
  const double interval_tol = 1e-10 * t_r;
  int iterations = 0;
  while (hi - lo > interval_tol && iterations < cfg.max_iterations) {
    const double mid = 0.5 * (lo + hi);
    const int sign_mid = sign_of(deriv(mid));
    if (sign_mid == 0) {
      lo = hi = mid;
      break;
    }
    if (sign_mid == sign_lo) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++iterations;
  }
  report.iterations += iterations;
  report.value = 0.5 * (lo + hi);
  const double tol =
      cfg.derivative_tolerance *
      std::max(1.0, static_cast<double>(timestamps.size()) / scene.pulse.width);
  report.converged = std::abs(deriv(report.value)) <= tol;
  return report;
}

/// Reflectivity estimate with known depth: the unique positive root of
/// d loglik / d alpha, found by bisection after doubling the upper bound
/// until the (monotone decreasing) derivative turns negative. Returns 0
/// with the clamp flag when the derivative at alpha = 0 is already
/// nonpositive.
inline EstimateReport reflectivity_mle_known_tau(
    std::span<const double> timestamps, double tau, const PixelScene& scene,
    const SolverConfig& cfg = {}) {
  EstimateReport report;
  const auto deriv = [&](double alpha) {
    return dloglik_dalpha(timestamps, alpha, tau, scene);
  };

  if (detail::dalpha_sign_at_zero(timestamps, tau, scene) <= 0) {
    report.value = 0.0;
    report.clamped = true;
    report.converged = true;
    report.bracket = {0.0, 0.0};
    return report;
  }

  double hi = cfg.upper_bound_init;
  int doublings = 0;
  while (deriv(hi) > 0.0 && doublings < cfg.max_upper_doublings) {
    hi *= 2.0;
    ++doublings;
  }
  if (deriv(hi) > 0.0) {
    report.status = SolverStatus::kMaxIterations;
    report.bracket = {0.0, hi};
    report.iterations = doublings;
    return report;
  }

  double lo = 0.0;
  const double interval_tol = 1e-12 * std::max(1.0, hi);
  int iterations = 0;
  while (hi - lo > interval_tol && iterations < cfg.max_iterations) {
    const double mid = 0.5 * (lo + hi);
    if (deriv(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++iterations;
  }
  report.value = 0.5 * (lo + hi);
  report.bracket = {lo, hi};
  report.iterations = doublings + iterations;
  const double scale = std::max(
      1.0, scene.acq.repetitions * scene.acq.quantum_efficiency *
               scene.pulse.energy);
  report.converged = std::abs(deriv(report.value)) <=
                     cfg.derivative_tolerance * scale;
  return report;
}

/// Unconstrained root of d loglik / d alpha, admitting negative values.
/// The derivative stays monotone decreasing on the open domain where every
/// term's denominator eta*alpha*s(t_k - tau) + b_lambda is positive, i.e.
/// alpha > -b_lambda / (eta * max_k s(t_k - tau)). NaN when m = 0 (the
/// objective has no stationary point).
inline double reflectivity_root_unconstrained(
    std::span<const double> timestamps, double tau, const PixelScene& scene,
    const SolverConfig& cfg = {}) {
  if (timestamps.empty()) return kNaN;
  if (scene.background_rate == 0.0) {
    // Positive closed form; no negative branch exists.
    return static_cast<double>(timestamps.size()) /
           (scene.acq.repetitions * scene.acq.quantum_efficiency *
            scene.pulse.energy);
  }
  const auto deriv = [&](double alpha) {
    const double eta = scene.acq.quantum_efficiency;
    const double b = scene.background_rate;
    double value = -scene.acq.repetitions * eta * scene.pulse.energy;
    for (double t : timestamps) {
      const double pulse = eta * pulse_value(scene.pulse, t - tau);
      value += pulse / (alpha * pulse + b);
    }
    return value;
  };

  if (detail::dalpha_sign_at_zero(timestamps, tau, scene) > 0) {
    // Positive root; reuse the constrained solver.
    return reflectivity_mle_known_tau(timestamps, tau, scene, cfg).value;
  }

  // Negative root between the domain boundary and zero.
  double peak = 0.0;
  for (double t : timestamps)
    peak = std::max(peak, pulse_value(scene.pulse, t - tau));
  if (!(peak > 0.0)) return kNaN;  // all pulse values underflowed
  const double boundary =
      -scene.background_rate / (scene.acq.quantum_efficiency * peak);
  double lo = boundary * (1.0 - 1e-12);
  int guard = 0;
  while (deriv(lo) <= 0.0 && guard++ < 200) lo = 0.5 * (lo + boundary);
  if (deriv(lo) <= 0.0) return kNaN;
  double hi = 0.0;
  for (int i = 0; i < cfg.max_iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (deriv(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Coarse depth initialization: argmax of the timestamps' Gaussian-kernel
/// density on a sigma_t/4 grid.
inline double coarse_init_delay(std::span<const double> timestamps,
                                const PixelScene& scene) {
  if (timestamps.empty()) return scene.acq.repetition_period / 2.0;
  const double t_r = scene.acq.repetition_period;
  const double step = scene.pulse.width / 4.0;
  double best_tau = detail::clamp_delay(timestamps[0], scene);
  double best_score = -kInf;
  for (double tau = step; tau < t_r; tau += step) {
    double score = 0.0;
    for (double t : timestamps)
      score += gaussian_pdf(t, tau, scene.pulse.width);
    if (score > best_score) {
      best_score = score;
      best_tau = tau;
    }
  }
  return best_tau;
}

/// Joint estimate of (depth, reflectivity) with outer diagnostics.
struct JointEstimate {
  EstimateReport depth;
  EstimateReport reflectivity;
  int outer_iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  ///< loglik after each outer pass
};

/// Joint constrained MLE by coordinate ascent: alternate the
/// known-reflectivity depth solver and the known-depth reflectivity solver
/// until both updates fall below tolerance. The objective never decreases
/// across outer passes; an update that would lower it (a nearest-crossing
/// saddle artifact) is rejected and iteration stops there.
inline JointEstimate joint_mle(std::span<const double> timestamps,
                               const PixelScene& scene, double tau_init,
                               double alpha_init,
                               const SolverConfig& cfg = {}) {
  if (timestamps.empty())
    throw std::invalid_argument("joint_mle: needs at least one timestamp");

  constexpr int kMaxOuter = 64;
  const double t_r = scene.acq.repetition_period;

  JointEstimate joint;
  double tau = detail::clamp_delay(tau_init, scene);
  double alpha = std::max(alpha_init, 0.0);
  if (alpha == 0.0 && scene.background_rate == 0.0) alpha = 1e-12;

  double objective = loglik(timestamps, alpha, tau, scene);
  joint.depth.value = tau;
  joint.reflectivity.value = alpha;

  for (int outer = 0; outer < kMaxOuter; ++outer) {
    joint.outer_iterations = outer + 1;

    EstimateReport dep;
    if (alpha > 0.0) {
      dep = depth_mle_known_alpha(timestamps, alpha, scene, tau, cfg);
      if (dep.status == SolverStatus::kBracketNotFound) {
        joint.depth = dep;
        joint.reflectivity.value = alpha;
        return joint;
      }
    } else {
      // With alpha clamped to zero the likelihood is flat in tau.
      dep.value = tau;
      dep.converged = true;
    }
    const EstimateReport ref =
        reflectivity_mle_known_tau(timestamps, dep.value, scene, cfg);
    if (ref.status != SolverStatus::kOk) {
      joint.depth = dep;
      joint.reflectivity = ref;
      return joint;
    }

    const double alpha_eval =
        (ref.value == 0.0 && scene.background_rate == 0.0) ? 1e-12 : ref.value;
    const double updated = loglik(timestamps, alpha_eval, dep.value, scene);
    if (updated < objective - 1e-9 * (1.0 + std::abs(objective))) {
      // Reject the step; keep the previous iterate.
      break;
    }

    const double dtau = std::abs(dep.value - tau);
    const double dalpha = std::abs(ref.value - alpha);
    tau = dep.value;
    alpha = ref.value;
    objective = updated;
    joint.depth = dep;
    joint.reflectivity = ref;
    joint.objective_trace.push_back(objective);

    if (dtau <= 1e-9 * t_r && dalpha <= 1e-9 * std::max(1.0, alpha)) {
      joint.converged = dep.converged && ref.converged;
      break;
    }
  }
  return joint;
}

/// Conditional reflectivity MLE for first-photon (censored-count) data:
/// given m detections pooled across exposures, each timestamp follows the
/// signal/noise mixture with weight pi = eta*alpha*S / (eta*alpha*S + B),
/// so the conditional log-likelihood is concave in pi and its unique
/// maximizer maps back to alpha. The count itself carries no usable
/// information once first-photon censoring saturates, which is why the
/// all-detection count estimator is not applicable here.
inline EstimateReport reflectivity_mixture_mle(
    std::span<const double> timestamps, double tau, const PixelScene& scene,
    double alpha_cap, const SolverConfig& cfg = {}) {
  EstimateReport report;
  if (timestamps.empty()) {
    report.value = 0.0;
    report.clamped = true;
    report.converged = true;
    report.status = SolverStatus::kNoData;
    return report;
  }
  const double eta = scene.acq.quantum_efficiency;
  const double pulse_energy = scene.pulse.energy;
  const double background = scene.background_energy();
  if (!(background > 0.0))
    throw std::invalid_argument(
        "reflectivity_mixture_mle: requires b_lambda > 0");
  if (!(alpha_cap > 0.0))
    throw std::invalid_argument("reflectivity_mixture_mle: alpha_cap must be > 0");

  const double uniform_density = 1.0 / scene.acq.repetition_period;
  std::vector<double> signal_density;
  signal_density.reserve(timestamps.size());
  for (double t : timestamps)
    signal_density.push_back(gaussian_pdf(t, tau, scene.pulse.width));

  const auto dl_dpi = [&](double pi) {
    double value = 0.0;
    for (double g : signal_density)
      value += (g - uniform_density) /
               (pi * g + (1.0 - pi) * uniform_density);
    return value;
  };
  const auto alpha_from_pi = [&](double pi) {
    return background * pi / ((1.0 - pi) * eta * pulse_energy);
  };

  const double pi_cap =
      eta * alpha_cap * pulse_energy / (eta * alpha_cap * pulse_energy + background);
  if (dl_dpi(0.0) <= 0.0) {
    report.value = 0.0;
    report.clamped = true;
    report.converged = true;
    report.bracket = {0.0, 0.0};
    return report;
  }
  if (dl_dpi(pi_cap) >= 0.0) {
    report.value = alpha_cap;
    report.clamped = true;
    report.converged = true;
    report.bracket = {pi_cap, pi_cap};
    return report;
  }

  double lo = 0.0;
  double hi = pi_cap;
  int iterations = 0;
  while (hi - lo > 1e-14 && iterations < cfg.max_iterations) {
    const double mid = 0.5 * (lo + hi);
    if (dl_dpi(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++iterations;
  }
  const double pi = 0.5 * (lo + hi);
  report.value = alpha_from_pi(pi);
  report.bracket = {lo, hi};
  report.iterations = iterations;
  report.converged = true;
  return report;
}

}  // namespace splidar
