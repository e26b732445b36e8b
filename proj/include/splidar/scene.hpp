#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "splidar/math.hpp"

namespace splidar {

/// Gaussian laser pulse s(t) = energy * N(t; 0, width^2).
///
/// `energy` is the per-cycle photon count carried by the pulse; `width` is
/// the RMS pulse width in seconds.
struct PulseShape {
  double energy = 1.0;
  double width = 1.0;
};

/// Acquisition constants shared by every pixel of a sensor.
struct AcquisitionConfig {
  double repetition_period = 1.0;  ///< t_r, seconds
  long repetitions = 1;            ///< N_r, laser cycles per frame
  double quantum_efficiency = 1.0; ///< eta, in (0, 1]
};

/// Ground-truth physics of a single pixel: reflectivity, time delay and
/// constant background rate, plus the pulse and acquisition constants.
///
/// The photon arrival is an inhomogeneous Poisson process with rate
///   flux(t) = eta * reflectivity * s(t - delay) + background_rate.
struct PixelScene {
  double reflectivity = 0.0;    ///< alpha, dimensionless, >= 0
  double delay = 0.0;           ///< tau, seconds, in (0, t_r)
  double background_rate = 0.0; ///< b_lambda, photons/second, >= 0
  PulseShape pulse;
  AcquisitionConfig acq;

  /// Background energy per cycle, B = b_lambda * t_r.
  double background_energy() const {
    return background_rate * acq.repetition_period;
  }

  /// Signal energy per cycle, eta * alpha * S.
  double signal_energy() const {
    return acq.quantum_efficiency * reflectivity * pulse.energy;
  }

  /// Per-cycle flux energy Lambda = eta * alpha * S + B.
  double cycle_energy() const { return signal_energy() + background_energy(); }

  /// Expected detections per frame, N_r * Lambda.
  double frame_energy() const {
    return static_cast<double>(acq.repetitions) * cycle_energy();
  }

  /// Depth z = c * tau / 2 in meters.
  double depth() const { return kSpeedOfLight * delay / 2.0; }
};

inline void validate(const PulseShape& p) {
  if (!(p.energy > 0.0)) throw std::invalid_argument("pulse energy must be > 0");
  if (!(p.width > 0.0)) throw std::invalid_argument("pulse width must be > 0");
}

inline void validate(const AcquisitionConfig& a) {
  if (!(a.repetition_period > 0.0))
    throw std::invalid_argument("repetition period must be > 0");
  if (a.repetitions < 1)
    throw std::invalid_argument("repetitions per frame must be >= 1");
  if (!(a.quantum_efficiency > 0.0 && a.quantum_efficiency <= 1.0))
    throw std::invalid_argument("quantum efficiency must be in (0, 1]");
}

inline void validate(const PixelScene& s) {
  validate(s.pulse);
  validate(s.acq);
  if (!(s.reflectivity >= 0.0))
    throw std::invalid_argument("reflectivity must be >= 0");
  if (!(s.delay > 0.0 && s.delay < s.acq.repetition_period))
    throw std::invalid_argument("delay must lie in (0, t_r)");
  if (!(s.background_rate >= 0.0))
    throw std::invalid_argument("background rate must be >= 0");
}

/// True when the pulse is effectively supported inside [0, t_r): the delay
/// sits at least 5 pulse widths away from both period edges. Closed-form
/// energies and bounds assume this; callers should warn when it fails.
inline bool pulse_support_ok(const PixelScene& s) {
  const double margin = 5.0 * s.pulse.width;
  return s.delay >= margin && s.delay <= s.acq.repetition_period - margin;
}

/// Pulse value s(t) = S * N(t; 0, sigma_t^2); strictly positive, symmetric.
inline double pulse_value(const PulseShape& p, double t) {
  return p.energy * gaussian_pdf(t, 0.0, p.width);
}

/// Photon flux at time t in [0, t_r):
/// eta * alpha * s(t - tau) + b_lambda.
inline double flux_at(const PixelScene& s, double t) {
  if (!(t >= 0.0 && t < s.acq.repetition_period))
    throw std::domain_error("flux_at: t outside [0, t_r)");
  return s.acq.quantum_efficiency * s.reflectivity *
             pulse_value(s.pulse, t - s.delay) +
         s.background_rate;
}

/// Per-cycle energy Lambda = eta * alpha * S + B. Exact when the pulse is
/// fully supported inside the period (check pulse_support_ok).
inline double total_energy(const PixelScene& s) {
  return s.cycle_energy();
}

/// Which energy ratio the `sbr` knob refers to. The flux model's natural
/// ratio is signal/background = eta*alpha*S/B; some derivations use the
/// pulse-energy ratio S/B instead. Both are reported in summaries.
enum class SbrConvention {
  kSignalEnergy,  ///< eta * alpha * S / B
  kPulseEnergy,   ///< S / B
};

/// Signal-to-background ratio. Returns +infinity when B = 0.
inline double sbr(const PixelScene& s,
                  SbrConvention conv = SbrConvention::kSignalEnergy) {
  const double b = s.background_energy();
  const double num = conv == SbrConvention::kSignalEnergy
                         ? s.signal_energy()
                         : s.pulse.energy;
  if (b == 0.0) return num == 0.0 ? kNaN : kInf;
  return num / b;
}

/// Builds a scene from an (expected photons per frame, SBR) pair by solving
///   N_r * (eta*alpha*S + B) = photon_level  and  SBR constraint
/// for the pulse energy S and the background rate b_lambda.
inline PixelScene scene_from_constraints(double photon_level, double sbr_value,
                                         double alpha, double tau,
                                         const AcquisitionConfig& acq,
                                         double sigma_t,
                                         SbrConvention conv =
                                             SbrConvention::kSignalEnergy) {
  validate(acq);
  if (!(photon_level > 0.0))
    throw std::invalid_argument("photon level must be > 0");
  if (!(sbr_value > 0.0)) throw std::invalid_argument("sbr must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");

  const double cycle_total = photon_level / static_cast<double>(acq.repetitions);
  const double eta = acq.quantum_efficiency;
  double pulse_energy = 0.0;
  double background = 0.0;
  if (conv == SbrConvention::kSignalEnergy) {
    // eta*alpha*S = r/(1+r) * Lambda, B = Lambda/(1+r)
    const double signal = cycle_total * sbr_value / (1.0 + sbr_value);
    background = cycle_total - signal;
    pulse_energy = signal / (eta * alpha);
  } else {
    // S/B = r with eta*alpha*S + B = Lambda
    pulse_energy = sbr_value * cycle_total / (1.0 + sbr_value * eta * alpha);
    background = cycle_total - eta * alpha * pulse_energy;
  }
  if (!(pulse_energy > 0.0) || !(background > 0.0))
    throw std::invalid_argument("infeasible photon-level/sbr constraints");

  PixelScene scene;
  scene.reflectivity = alpha;
  scene.delay = tau;
  scene.background_rate = background / acq.repetition_period;
  scene.pulse = PulseShape{pulse_energy, sigma_t};
  scene.acq = acq;
  validate(scene);
  return scene;
}

/// Per-pixel maps of one sensor plus the shared pulse/acquisition constants.
struct SceneGrid {
  int width = 0;
  int height = 0;
  std::vector<double> reflectivity;    ///< row-major, height x width
  std::vector<double> delay;
  std::vector<double> background_rate;
  PulseShape pulse;
  AcquisitionConfig acq;

  std::size_t size() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }

  PixelScene at(int row, int col) const {
    const std::size_t k = index(row, col);
    return PixelScene{reflectivity[k], delay[k], background_rate[k], pulse,
                      acq};
  }
};

inline void validate(const SceneGrid& g) {
  if (g.width <= 0 || g.height <= 0)
    throw std::invalid_argument("scene grid dimensions must be positive");
  if (g.reflectivity.size() != g.size() || g.delay.size() != g.size() ||
      g.background_rate.size() != g.size())
    throw std::invalid_argument("scene grid maps must share dimensions");
  validate(g.pulse);
  validate(g.acq);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (!(g.reflectivity[k] >= 0.0))
      throw std::invalid_argument("scene grid: negative reflectivity");
    if (!(g.delay[k] > 0.0 && g.delay[k] < g.acq.repetition_period))
      throw std::invalid_argument("scene grid: delay outside (0, t_r)");
    if (!(g.background_rate[k] >= 0.0))
      throw std::invalid_argument("scene grid: negative background rate");
  }
}

/// Uniform grid where every pixel shares one PixelScene.
inline SceneGrid uniform_grid(const PixelScene& scene, int width, int height) {
  validate(scene);
  SceneGrid g;
  g.width = width;
  g.height = height;
  g.reflectivity.assign(static_cast<std::size_t>(width) * height,
                        scene.reflectivity);
  g.delay.assign(g.reflectivity.size(), scene.delay);
  g.background_rate.assign(g.reflectivity.size(), scene.background_rate);
  g.pulse = scene.pulse;
  g.acq = scene.acq;
  validate(g);
  return g;
}

}  // namespace splidar
