#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "splidar/math.hpp"
#include "splidar/parallel.hpp"
#include "splidar/rng.hpp"
#include "splidar/scene.hpp"

namespace splidar {

/// One pixel's detections from one acquisition: the count and the relative
/// timestamps, each in [0, t_r).
struct TimestampDraw {
  std::vector<double> timestamps;

  std::size_t count() const { return timestamps.size(); }
};

/// Number of detections in one frame: Poisson with mean N_r * Lambda.
inline std::uint64_t sample_count(const PixelScene& scene, Rng& rng) {
  return rng.poisson(scene.frame_energy());
}

namespace detail {

/// Gaussian draw truncated to [0, t_r) by rejection. The pulse is assumed
/// effectively supported inside the period, so rejections are rare.
inline double truncated_signal_draw(double mean, double sigma, double t_r,
                                    Rng& rng) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double t = rng.normal(mean, sigma);
    if (t >= 0.0 && t < t_r) return t;
  }
  throw std::runtime_error(
      "signal timestamp rejection did not terminate; pulse support is "
      "degenerate relative to [0, t_r)");
}

/// Signal timestamp delay + jitter + pulse, truncated to [0, t_r) by
/// rejection. Jitter and pulse are redrawn together so the accepted law is
/// the truncated Gaussian with the combined width.
inline double jittered_signal_draw(const PixelScene& scene,
                                   double jitter_sigma, Rng& rng) {
  const double t_r = scene.acq.repetition_period;
  if (jitter_sigma <= 0.0)
    return truncated_signal_draw(scene.delay, scene.pulse.width, t_r, rng);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double t = scene.delay + rng.normal(0.0, jitter_sigma) +
                     rng.normal(0.0, scene.pulse.width);
    if (t >= 0.0 && t < t_r) return t;
  }
  throw std::runtime_error(
      "signal timestamp rejection did not terminate; pulse support is "
      "degenerate relative to [0, t_r)");
}

}  // namespace detail

/// Draws m i.i.d. timestamps from the normalized flux lambda(t)/Lambda via
/// mixture sampling: with probability eta*alpha*S/Lambda a Gaussian draw at
/// the delay (redrawn when outside the period), otherwise Uniform[0, t_r).
inline TimestampDraw sample_timestamps(const PixelScene& scene, std::size_t m,
                                       Rng& rng) {
  const double cycle = scene.cycle_energy();
  if (m > 0 && !(cycle > 0.0))
    throw std::invalid_argument("sample_timestamps: zero flux but m > 0");
  const double p_signal = cycle > 0.0 ? scene.signal_energy() / cycle : 0.0;
  const double t_r = scene.acq.repetition_period;

  TimestampDraw draw;
  draw.timestamps.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (rng.bernoulli(p_signal)) {
      draw.timestamps.push_back(detail::truncated_signal_draw(
          scene.delay, scene.pulse.width, t_r, rng));
    } else {
      draw.timestamps.push_back(rng.uniform(0.0, t_r));
    }
  }
  return draw;
}

/// Count + timestamps for one all-detection acquisition.
inline TimestampDraw sample_detections(const PixelScene& scene, Rng& rng) {
  const std::uint64_t m = sample_count(scene, rng);
  return sample_timestamps(scene, static_cast<std::size_t>(m), rng);
}

/// How sensor-mode first-photon timestamps are generated.
enum class FirstPhotonMode {
  /// Detection with probability 1 - exp(-N_r*Lambda); conditioned on it,
  /// one draw from the signal/noise mixture (Bernoulli split with
  /// P_sig = eta*alpha*S / (eta*alpha*S + B)).
  kMixture,
  /// Minimum of m i.i.d. flux draws with m ~ Poisson(N_r*Lambda), m >= 1.
  kOrderStatistic,
};

struct FirstPhotonOptions {
  double jitter_sigma = 0.0;  ///< timing jitter std-dev, seconds
  FirstPhotonMode mode = FirstPhotonMode::kMixture;
};

/// One frame's recorded timestamp for one pixel, or nothing when no photon
/// was detected during the exposure.
inline std::optional<double> sample_first_photon(
    const PixelScene& scene, Rng& rng, const FirstPhotonOptions& opt = {}) {
  const double mean = scene.frame_energy();
  if (rng.uniform() < std::exp(-mean)) return std::nullopt;

  if (opt.mode == FirstPhotonMode::kOrderStatistic) {
    std::uint64_t m = 0;
    while (m == 0) m = rng.poisson(mean);
    double first = kInf;
    const double p_signal = scene.signal_energy() / scene.cycle_energy();
    for (std::uint64_t k = 0; k < m; ++k) {
      const double t =
          rng.bernoulli(p_signal)
              ? detail::jittered_signal_draw(scene, opt.jitter_sigma, rng)
              : rng.uniform(0.0, scene.acq.repetition_period);
      first = std::min(first, t);
    }
    return first;
  }

  const double p_signal = scene.signal_energy() / scene.cycle_energy();
  if (rng.bernoulli(p_signal))
    return detail::jittered_signal_draw(scene, opt.jitter_sigma, rng);
  return rng.uniform(0.0, scene.acq.repetition_period);
}

/// A sequence of 2-D first-photon timestamp frames with validity mask.
/// Invalid pixels (no detection) carry NaN in `timestamps`.
struct FrameStack {
  int width = 0;
  int height = 0;
  int n_frames = 0;
  std::vector<double> timestamps;  ///< frame-major, then row-major; NaN = none
  SceneGrid scene;                 ///< ground truth used for generation
  std::uint64_t seed = 0;
  FirstPhotonOptions options;

  std::size_t frame_stride() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  double at(int frame, int row, int col) const {
    return timestamps[static_cast<std::size_t>(frame) * frame_stride() +
                      static_cast<std::size_t>(row) * width +
                      static_cast<std::size_t>(col)];
  }

  bool valid(int frame, int row, int col) const {
    return !std::isnan(at(frame, row, col));
  }

  double valid_fraction() const {
    if (timestamps.empty()) return 0.0;
    std::size_t n = 0;
    for (double t : timestamps) n += !std::isnan(t);
    return static_cast<double>(n) / static_cast<double>(timestamps.size());
  }
};

/// Simulates n_frames sensor frames over the grid. Every (frame, row, col)
/// cell draws from its own RNG sub-stream keyed on the seed, so the result
/// is identical regardless of traversal order or thread count.
inline FrameStack simulate_frames(const SceneGrid& grid, int n_frames,
                                  std::uint64_t seed,
                                  const FirstPhotonOptions& opt = {},
                                  int threads = 1) {
  validate(grid);
  if (n_frames < 1)
    throw std::invalid_argument("simulate_frames: n_frames must be >= 1");

  FrameStack stack;
  stack.width = grid.width;
  stack.height = grid.height;
  stack.n_frames = n_frames;
  stack.scene = grid;
  stack.seed = seed;
  stack.options = opt;
  stack.timestamps.assign(stack.frame_stride() * n_frames, kNaN);

  const std::size_t cells = stack.timestamps.size();
  parallel_for(cells, threads, [&](std::size_t cell) {
    const std::size_t f = cell / stack.frame_stride();
    const std::size_t pixel = cell % stack.frame_stride();
    const int row = static_cast<int>(pixel) / grid.width;
    const int col = static_cast<int>(pixel) % grid.width;
    Rng rng = Rng::stream(seed, StreamTag::kFrame, f,
                          static_cast<std::uint64_t>(row),
                          static_cast<std::uint64_t>(col));
    const auto t = sample_first_photon(grid.at(row, col), rng, opt);
    if (t) stack.timestamps[cell] = *t;
  });
  return stack;
}

// ---------------------------------------------------------------------------
// Radiometric parameterization
// ---------------------------------------------------------------------------

/// Physical acquisition constants used to derive per-pixel reflectivity and
/// background energies from scene reflectance and hardware properties.
struct RadiometricParams {
  double pulse_energy_j = 1.219e-9;    ///< E_0
  double wavelength_m = 671e-9;        ///< lambda
  double planck_js = 6.626e-34;        ///< h
  double attenuation_db_per_km = 0.7;  ///< alpha_atm
  double range_m = 30.0;               ///< R
  double f_number = 2.0;
  double pixel_width_m = 9.2e-6;       ///< W_p
  double pixel_height_m = 9.2e-6;      ///< H_p
  double illuminated_area_m2 = 192.0 * 128.0 * 9.2e-6 * 9.2e-6;  ///< A_illum
  double background_radiation_w = 0.0002;  ///< W_bck
  double dark_count_hz = 126.0;            ///< C_dc
  double jitter_sigma_s = 220e-12;         ///< sigma_j
  /// When set, the attenuation exponent is used literally as
  /// 10^(-alpha_atm * distance_km) instead of dividing the dB figure by 10.
  bool raw_exponent = false;
};

inline void validate(const RadiometricParams& p) {
  if (!(p.pulse_energy_j > 0.0 && p.wavelength_m > 0.0 && p.planck_js > 0.0 &&
        p.range_m > 0.0 && p.f_number > 0.0 && p.pixel_width_m > 0.0 &&
        p.pixel_height_m > 0.0 && p.illuminated_area_m2 > 0.0))
    throw std::invalid_argument("radiometric parameters must be positive");
  if (p.attenuation_db_per_km < 0.0 || p.background_radiation_w < 0.0 ||
      p.dark_count_hz < 0.0 || p.jitter_sigma_s < 0.0)
    throw std::invalid_argument("radiometric parameters must be nonnegative");
}

namespace detail {

inline double attenuation_factor(const RadiometricParams& p, double paths) {
  const double distance_km = paths * p.range_m / 1000.0;
  const double exponent = p.raw_exponent
                              ? p.attenuation_db_per_km * distance_km
                              : p.attenuation_db_per_km * distance_km / 10.0;
  return std::pow(10.0, -exponent);
}

inline double photon_energy_j(const RadiometricParams& p) {
  return p.planck_js * kSpeedOfLight / p.wavelength_m;
}

}  // namespace detail

/// Per-pixel reflectivity from scene reflectance Gamma in [0, 1]:
///   alpha = (E_0 / (h c / lambda)) * (10^-a(2R) * Gamma) / (8 f^2)
///           * (W_p H_p / A_illum),
/// two-way attenuated.
inline double radiometric_alpha(const RadiometricParams& p, double gamma) {
  validate(p);
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("reflectance must be in [0, 1]");
  return p.pulse_energy_j / detail::photon_energy_j(p) *
         detail::attenuation_factor(p, 2.0) * gamma /
         (8.0 * p.f_number * p.f_number) *
         (p.pixel_width_m * p.pixel_height_m / p.illuminated_area_m2);
}

inline std::vector<double> radiometric_alpha(const RadiometricParams& p,
                                             const std::vector<double>& gamma) {
  std::vector<double> out;
  out.reserve(gamma.size());
  for (double g : gamma) out.push_back(radiometric_alpha(p, g));
  return out;
}

/// Background photon energies per cycle: ambient light (one-way attenuated)
/// and dark counts.
struct BackgroundEnergy {
  double ambient = 0.0;     ///< B_bck, photons per cycle before eta
  double dark_count = 0.0;  ///< B_dc = C_dc * t_r
};

inline BackgroundEnergy background_energy(const RadiometricParams& p,
                                          double gamma, double t_r) {
  validate(p);
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("reflectance must be in [0, 1]");
  if (!(t_r > 0.0)) throw std::invalid_argument("t_r must be > 0");
  BackgroundEnergy out;
  out.ambient = p.background_radiation_w / detail::photon_energy_j(p) *
                detail::attenuation_factor(p, 1.0) * gamma /
                (8.0 * p.f_number * p.f_number) * p.pixel_width_m *
                p.pixel_height_m * t_r;
  out.dark_count = p.dark_count_hz * t_r;
  return out;
}

/// Combined per-cycle noise energy B = eta * B_bck + B_dc.
inline double combined_background(const BackgroundEnergy& e, double eta) {
  return eta * e.ambient + e.dark_count;
}

/// Builds a scene grid from reflectance and depth maps under the
/// radiometric model. The pulse carries unit energy (S = 1); per-pixel
/// reflectivity absorbs the link budget.
inline SceneGrid scene_from_radiometric(const RadiometricParams& params,
                                        const std::vector<double>& gamma,
                                        const std::vector<double>& depth_m,
                                        int width, int height, double sigma_t,
                                        const AcquisitionConfig& acq) {
  validate(params);
  validate(acq);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (gamma.size() != n || depth_m.size() != n)
    throw std::invalid_argument("scene_from_radiometric: map size mismatch");

  SceneGrid grid;
  grid.width = width;
  grid.height = height;
  grid.pulse = PulseShape{1.0, sigma_t};
  grid.acq = acq;
  grid.reflectivity.resize(n);
  grid.delay.resize(n);
  grid.background_rate.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    grid.reflectivity[k] = radiometric_alpha(params, gamma[k]);
    grid.delay[k] = 2.0 * depth_m[k] / kSpeedOfLight;
    const BackgroundEnergy e =
        background_energy(params, gamma[k], acq.repetition_period);
    grid.background_rate[k] =
        combined_background(e, acq.quantum_efficiency) / acq.repetition_period;
  }
  validate(grid);
  return grid;
}

}  // namespace splidar
