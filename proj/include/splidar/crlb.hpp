#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "splidar/math.hpp"
#include "splidar/quadrature.hpp"
#include "splidar/scene.hpp"

namespace splidar {

/// Variance lower bound for the count-based reflectivity estimator:
///   (eta*S*alpha + B) / (N_r * eta^2 * S^2).
inline double crlb_count(const PixelScene& s) {
  const double eta = s.acq.quantum_efficiency;
  const double pulse_energy = s.pulse.energy;
  const double nr = static_cast<double>(s.acq.repetitions);
  return (eta * pulse_energy * s.reflectivity + s.background_energy()) /
         (nr * eta * eta * pulse_energy * pulse_energy);
}

/// The same bound written through the signal-to-background ratio:
///   (1 + 1/SBR) / (N_r * eta * S / alpha).
/// Requires alpha > 0 and B > 0; agrees with crlb_count to roundoff.
inline double crlb_count_sbr_form(const PixelScene& s) {
  if (!(s.reflectivity > 0.0))
    throw std::invalid_argument("crlb_count_sbr_form: alpha must be > 0");
  const double ratio = sbr(s, SbrConvention::kSignalEnergy);
  if (!std::isfinite(ratio))
    throw std::invalid_argument("crlb_count_sbr_form: B must be > 0");
  const double eta = s.acq.quantum_efficiency;
  const double nr = static_cast<double>(s.acq.repetitions);
  return (1.0 + 1.0 / ratio) /
         (nr * eta * s.pulse.energy / s.reflectivity);
}

struct CrlbValue {
  double value = 0.0;
  double quad_error = 0.0;  ///< absolute error estimate of the variance bound
  bool converged = false;
};

/// Variance lower bound for the timestamp-based reflectivity estimator:
/// the reciprocal of  N_r * eta^2 * integral_0^tr s^2(t-tau) / flux(t) dt,
/// evaluated by adaptive quadrature over [0, t_r].
inline CrlbValue crlb_timestamp(const PixelScene& s,
                                const QuadratureConfig& quad = {}) {
  const double eta = s.acq.quantum_efficiency;
  const double nr = static_cast<double>(s.acq.repetitions);
  const double alpha = s.reflectivity;
  const double b = s.background_rate;

  const auto integrand = [&](double t) {
    const double pulse = pulse_value(s.pulse, t - s.delay);
    const double denom = eta * alpha * pulse + b;
    if (denom == 0.0) return 0.0;  // pulse tail underflow with b = 0
    return pulse * pulse / denom;
  };
  const QuadratureResult q =
      integrate(integrand, 0.0, s.acq.repetition_period, quad);
  const double info = nr * eta * eta * q.value;
  if (!(info > 0.0))
    throw std::domain_error("crlb_timestamp: zero Fisher information");

  CrlbValue out;
  out.value = 1.0 / info;
  // First-order propagation of the quadrature error through the reciprocal.
  out.quad_error = q.error_estimate * nr * eta * eta * out.value * out.value;
  out.converged = q.converged;
  return out;
}

/// Count-based and timestamp-based bounds for one scene plus their ratio.
struct CrlbReport {
  double crlb_count = 0.0;
  double crlb_timestamp = 0.0;
  double ratio = 0.0;  ///< timestamp / count, <= 1 up to quadrature error
  double quad_error = 0.0;
  bool converged = false;
};

inline CrlbReport crlb_report(const PixelScene& s,
                              const QuadratureConfig& quad = {}) {
  CrlbReport r;
  r.crlb_count = crlb_count(s);
  const CrlbValue ts = crlb_timestamp(s, quad);
  r.crlb_timestamp = ts.value;
  r.quad_error = ts.quad_error;
  r.converged = ts.converged;
  r.ratio = ts.value / r.crlb_count;
  return r;
}

struct Theorem2Row {
  PixelScene scene;
  CrlbReport report;
  bool inequality_holds = false;  ///< timestamp <= count + tolerance
  bool strictness_ok = false;     ///< strict gap when b_lambda > 0
  bool equality_ok = false;       ///< equality at b_lambda = 0 (rel 1e-9)
};

struct Theorem2Report {
  std::vector<Theorem2Row> rows;
  bool all_hold = true;
  std::string failure;  ///< description of the first offending scene
};

/// Certifies the bound comparison on a list of scenes: the timestamp-based
/// bound never exceeds the count-based one, strictly so for b_lambda > 0,
/// with equality (rel. 1e-9) at b_lambda = 0.
inline Theorem2Report verify_theorem2(std::span<const PixelScene> scenes,
                                      const QuadratureConfig& quad = {}) {
  Theorem2Report report;
  for (const PixelScene& scene : scenes) {
    Theorem2Row row;
    row.scene = scene;
    row.report = crlb_report(scene, quad);
    const double count = row.report.crlb_count;
    const double ts = row.report.crlb_timestamp;
    const double tol = std::max(quad.abs_tol, quad.rel_tol * count) +
                       row.report.quad_error;

    row.inequality_holds = ts <= count + tol;
    if (scene.background_rate > 0.0) {
      row.strictness_ok = (count - ts) > 10.0 * tol;
      row.equality_ok = true;
    } else {
      row.strictness_ok = true;
      row.equality_ok = nearly_equal(ts, count, 1e-9);
    }
    if (!(row.inequality_holds && row.strictness_ok && row.equality_ok) &&
        report.all_hold) {
      report.all_hold = false;
      report.failure = "theorem-2 violation at b_lambda = " +
                       std::to_string(scene.background_rate) +
                       ", alpha = " + std::to_string(scene.reflectivity);
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace splidar
