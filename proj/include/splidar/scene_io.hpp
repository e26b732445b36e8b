#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "splidar/config.hpp"
#include "splidar/scene.hpp"

namespace splidar {

/// A scene preset as loaded from a key-value file. Keeps the resolved
/// physical quantities alongside the scene so manifests and sidecars can
/// record exactly what was run.
struct ScenePreset {
  PixelScene scene;
  SbrConvention convention = SbrConvention::kSignalEnergy;
  bool from_constraints = false;  ///< built from (photon_level, sbr)
  double photon_level = 0.0;      ///< expected detections per frame
};

inline SbrConvention parse_sbr_convention(const std::string& name) {
  if (name == "signal_energy") return SbrConvention::kSignalEnergy;
  if (name == "pulse_energy") return SbrConvention::kPulseEnergy;
  throw ConfigError("sbr_convention must be signal_energy or pulse_energy, got `" +
                    name + "`");
}

/// Loads a scene preset. Required keys: t_r, n_r, eta, alpha, tau, sigma_t,
/// photon_level, and exactly one of sbr / b_lambda. Optional:
/// sbr_convention. Unknown keys are rejected.
inline ScenePreset load_scene_preset(const KeyValueFile& kv) {
  kv.restrict_keys({"t_r", "n_r", "eta", "alpha", "tau", "sigma_t",
                    "photon_level", "sbr", "b_lambda", "sbr_convention"});
  for (const char* key : {"t_r", "n_r", "eta", "alpha", "tau", "sigma_t",
                          "photon_level"})
    kv.require(key);
  if (kv.has("sbr") == kv.has("b_lambda"))
    throw ConfigError(kv.origin() +
                      ": exactly one of `sbr` / `b_lambda` must be given");

  AcquisitionConfig acq;
  acq.repetition_period = kv.get_double("t_r");
  acq.repetitions = kv.get_long("n_r");
  acq.quantum_efficiency = kv.get_double("eta");

  ScenePreset preset;
  preset.convention =
      parse_sbr_convention(kv.get_string("sbr_convention", "signal_energy"));
  preset.photon_level = kv.get_double("photon_level");
  const double alpha = kv.get_double("alpha");
  const double tau = kv.get_double("tau");
  const double sigma_t = kv.get_double("sigma_t");

  if (kv.has("sbr")) {
    preset.from_constraints = true;
    preset.scene = scene_from_constraints(preset.photon_level,
                                          kv.get_double("sbr"), alpha, tau,
                                          acq, sigma_t, preset.convention);
  } else {
    // Background rate given directly; the pulse energy absorbs the rest of
    // the photon budget.
    const double b_lambda = kv.get_double("b_lambda");
    if (!(b_lambda >= 0.0))
      throw ConfigError(kv.origin() + ": b_lambda must be >= 0");
    const double cycle_total =
        preset.photon_level / static_cast<double>(acq.repetitions);
    const double signal = cycle_total - b_lambda * acq.repetition_period;
    if (!(signal > 0.0))
      throw ConfigError(kv.origin() +
                        ": photon_level too small for the given b_lambda");
    PixelScene scene;
    scene.reflectivity = alpha;
    scene.delay = tau;
    scene.background_rate = b_lambda;
    scene.pulse = PulseShape{signal / (acq.quantum_efficiency * alpha), sigma_t};
    scene.acq = acq;
    validate(scene);
    preset.scene = scene;
  }
  return preset;
}

inline ScenePreset load_scene_preset(const std::string& path) {
  return load_scene_preset(KeyValueFile::load(path));
}

/// Resolved scene parameters as ordered key-value pairs, for sidecars and
/// manifests. Values are printed with full precision.
std::vector<std::pair<std::string, std::string>> inline scene_config_entries(
    const PixelScene& s) {
  auto fmt = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  return {
      {"t_r", fmt(s.acq.repetition_period)},
      {"n_r", std::to_string(s.acq.repetitions)},
      {"eta", fmt(s.acq.quantum_efficiency)},
      {"alpha", fmt(s.reflectivity)},
      {"tau", fmt(s.delay)},
      {"sigma_t", fmt(s.pulse.width)},
      {"pulse_energy", fmt(s.pulse.energy)},
      {"b_lambda", fmt(s.background_rate)},
      {"photon_level", fmt(s.frame_energy())},
      {"sbr_signal_energy", fmt(sbr(s, SbrConvention::kSignalEnergy))},
      {"sbr_pulse_energy", fmt(sbr(s, SbrConvention::kPulseEnergy))},
  };
}

}  // namespace splidar
