#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "splidar/crlb.hpp"
#include "splidar/estimators.hpp"
#include "splidar/math.hpp"
#include "splidar/parallel.hpp"
#include "splidar/rng.hpp"
#include "splidar/scene.hpp"
#include "splidar/simulator.hpp"

namespace splidar {

/// Mean squared deviation from a single truth value.
inline double mse(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw std::invalid_argument("mse: empty input");
  double sum = 0.0;
  for (double e : estimates) {
    const double d = e - truth;
    sum += d * d;
  }
  return sum / static_cast<double>(estimates.size());
}

inline double mse(std::span<const double> estimates,
                  std::span<const double> truth) {
  if (estimates.empty() || estimates.size() != truth.size())
    throw std::invalid_argument("mse: size mismatch or empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - truth[i];
    sum += d * d;
  }
  return sum / static_cast<double>(estimates.size());
}

/// Which estimator pair a sweep compares.
enum class EstimatorPair {
  kDepth,         ///< known-reflectivity solver vs. timestamp mean
  kReflectivity,  ///< known-depth solver vs. photon-count estimate
};

enum class InitMode {
  kOracle,  ///< solvers start at the ground truth
  kCoarse,  ///< solvers start at the smoothed-histogram argmax
};

/// Monte Carlo sweep specification over a list of SBR values.
struct SweepSpec {
  std::vector<double> sbr_values;
  double photon_level = 10.0;
  long repetitions = 1000;  ///< N_r
  double quantum_efficiency = 1.0;
  double alpha = 0.5;
  double tau = 4.0;
  double sigma_t = 0.2;
  double repetition_period = 10.0;
  int trials = 1000;
  std::uint64_t seed = 0;
  EstimatorPair pair = EstimatorPair::kReflectivity;
  InitMode init = InitMode::kOracle;
  SbrConvention convention = SbrConvention::kSignalEnergy;
  SolverConfig solver;
  bool keep_trials = false;

  AcquisitionConfig acquisition() const {
    return AcquisitionConfig{repetition_period, repetitions,
                             quantum_efficiency};
  }

  PixelScene scene_for(double sbr_value) const {
    return scene_from_constraints(photon_level, sbr_value, alpha, tau,
                                  acquisition(), sigma_t, convention);
  }
};

inline void validate(const SweepSpec& spec) {
  if (spec.sbr_values.empty())
    throw std::invalid_argument("sweep: sbr list must not be empty");
  for (double s : spec.sbr_values)
    if (!(s > 0.0)) throw std::invalid_argument("sweep: sbr values must be > 0");
  if (spec.trials < 1) throw std::invalid_argument("sweep: trials must be >= 1");
  (void)spec.scene_for(spec.sbr_values.front());  // rejects infeasible scenes
}

/// One simulated trial's estimates, with clamp flags and the unconstrained
/// values (pre-clamping) kept for diagnostics.
struct TrialRecord {
  std::size_t detections = 0;
  double est_with = kNaN;
  double est_without = kNaN;
  double unclamped_with = kNaN;
  double unclamped_without = kNaN;
  bool clamped_with = false;
  bool clamped_without = false;
  bool failed = false;
};

namespace detail {

inline TrialRecord run_pair_trial(const PixelScene& scene, EstimatorPair pair,
                                  InitMode init, const SolverConfig& solver,
                                  Rng& rng) {
  TrialRecord rec;
  const TimestampDraw draw = sample_detections(scene, rng);
  rec.detections = draw.count();
  const std::span<const double> ts(draw.timestamps);

  if (pair == EstimatorPair::kDepth) {
    if (ts.empty()) {
      rec.failed = true;
      return rec;
    }
    const double tau0 = init == InitMode::kOracle
                            ? scene.delay
                            : coarse_init_delay(ts, scene);
    const EstimateReport with =
        depth_mle_known_alpha(ts, scene.reflectivity, scene, tau0, solver);
    const EstimateReport without = depth_sample_mean(ts, scene);
    if (with.status != SolverStatus::kOk || without.status != SolverStatus::kOk) {
      rec.failed = true;
      return rec;
    }
    rec.est_with = with.value;
    rec.est_without = without.value;
    rec.unclamped_with = with.value;
    rec.unclamped_without = without.value;
    rec.clamped_with = with.clamped;
    rec.clamped_without = without.clamped;
    return rec;
  }

  const EstimateReport with =
      reflectivity_mle_known_tau(ts, scene.delay, scene, solver);
  const EstimateReport without = reflectivity_count_mle(rec.detections, scene);
  if (with.status == SolverStatus::kMaxIterations) {
    rec.failed = true;
    return rec;
  }
  rec.est_with = with.value;
  rec.est_without = without.value;
  rec.clamped_with = with.clamped;
  rec.clamped_without = without.clamped;
  rec.unclamped_with =
      with.clamped ? reflectivity_root_unconstrained(ts, scene.delay, scene,
                                                     solver)
                   : with.value;
  const double eta = scene.acq.quantum_efficiency;
  rec.unclamped_without =
      (static_cast<double>(rec.detections) /
           static_cast<double>(scene.acq.repetitions) -
       scene.background_energy()) /
      (eta * scene.pulse.energy);
  return rec;
}

}  // namespace detail

/// Per-SBR aggregate of a sweep.
struct SweepRow {
  double sbr = 0.0;
  int trials = 0;
  int failures = 0;
  double mse_with = kNaN;
  double mse_without = kNaN;
  double crlb_count = kNaN;      ///< reflectivity pair only
  double crlb_timestamp = kNaN;  ///< reflectivity pair only
  double mse_with_unclamped = kNaN;
  double mse_without_unclamped = kNaN;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::vector<TrialRecord>> trials;  ///< kept when requested
};

/// Runs the Monte Carlo comparison for every SBR in the spec. Trials draw
/// from per-(sbr, trial) RNG sub-streams and aggregate in trial order, so
/// the result is identical for any thread count.
inline SweepResult run_sweep(const SweepSpec& spec, int threads = 1) {
  validate(spec);
  SweepResult result;
  const QuadratureConfig quad;

  for (std::size_t si = 0; si < spec.sbr_values.size(); ++si) {
    const PixelScene scene = spec.scene_for(spec.sbr_values[si]);
    std::vector<TrialRecord> records(static_cast<std::size_t>(spec.trials));
    parallel_for(records.size(), threads, [&](std::size_t t) {
      Rng rng = Rng::stream(spec.seed, StreamTag::kSweepTrial, si, t);
      records[t] =
          detail::run_pair_trial(scene, spec.pair, spec.init, spec.solver, rng);
    });

    SweepRow row;
    row.sbr = spec.sbr_values[si];
    row.trials = spec.trials;
    const double truth =
        spec.pair == EstimatorPair::kDepth ? scene.delay : scene.reflectivity;
    double sum_with = 0.0;
    double sum_without = 0.0;
    double sum_with_unc = 0.0;
    double sum_without_unc = 0.0;
    long n_ok = 0;
    long n_unc = 0;
    for (const TrialRecord& rec : records) {
      if (rec.failed) {
        ++row.failures;
        continue;
      }
      ++n_ok;
      sum_with += (rec.est_with - truth) * (rec.est_with - truth);
      sum_without += (rec.est_without - truth) * (rec.est_without - truth);
      if (!std::isnan(rec.unclamped_with) && !std::isnan(rec.unclamped_without)) {
        ++n_unc;
        sum_with_unc +=
            (rec.unclamped_with - truth) * (rec.unclamped_with - truth);
        sum_without_unc +=
            (rec.unclamped_without - truth) * (rec.unclamped_without - truth);
      }
    }
    if (n_ok > 0) {
      row.mse_with = sum_with / static_cast<double>(n_ok);
      row.mse_without = sum_without / static_cast<double>(n_ok);
    }
    if (n_unc > 0) {
      row.mse_with_unclamped = sum_with_unc / static_cast<double>(n_unc);
      row.mse_without_unclamped = sum_without_unc / static_cast<double>(n_unc);
    }
    if (spec.pair == EstimatorPair::kReflectivity) {
      const CrlbReport crlb = crlb_report(scene, quad);
      row.crlb_count = crlb.crlb_count;
      row.crlb_timestamp = crlb.crlb_timestamp;
    }
    result.rows.push_back(row);
    if (spec.keep_trials)
      result.trials.push_back(std::move(records));
  }
  return result;
}

/// One scatter-plot row: a single trial's estimates at one SBR.
struct ScatterRow {
  double sbr = 0.0;
  int trial = 0;
  double truth = 0.0;
  double est_with = kNaN;
  double est_without = kNaN;
};

/// Per-trial estimates for scatter reproduction; scatter trials use their
/// own stream tag so they are independent of sweep trials under one seed.
inline std::vector<ScatterRow> run_scatter(const SweepSpec& spec,
                                           int threads = 1) {
  validate(spec);
  std::vector<ScatterRow> rows(spec.sbr_values.size() *
                               static_cast<std::size_t>(spec.trials));
  for (std::size_t si = 0; si < spec.sbr_values.size(); ++si) {
    const PixelScene scene = spec.scene_for(spec.sbr_values[si]);
    const double truth =
        spec.pair == EstimatorPair::kDepth ? scene.delay : scene.reflectivity;
    parallel_for(static_cast<std::size_t>(spec.trials), threads,
                 [&](std::size_t t) {
                   Rng rng =
                       Rng::stream(spec.seed, StreamTag::kScatterTrial, si, t);
                   const TrialRecord rec = detail::run_pair_trial(
                       scene, spec.pair, spec.init, spec.solver, rng);
                   ScatterRow& row =
                       rows[si * static_cast<std::size_t>(spec.trials) + t];
                   row.sbr = spec.sbr_values[si];
                   row.trial = static_cast<int>(t);
                   row.truth = truth;
                   row.est_with = rec.est_with;
                   row.est_without = rec.est_without;
                 });
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Frame-level reconstruction
// ---------------------------------------------------------------------------

enum class ReconstructMode {
  kBaseline,  ///< timestamp mean + count-based reflectivity
  kJoint,     ///< bracketed depth solver + conditional mixture reflectivity
};

inline ReconstructMode parse_reconstruct_mode(const std::string& name) {
  if (name == "baseline") return ReconstructMode::kBaseline;
  if (name == "joint") return ReconstructMode::kJoint;
  throw std::invalid_argument("mode must be baseline or joint, got `" + name +
                              "`");
}

struct ReconstructionMetrics {
  double depth_rmse = kNaN;         ///< on delay normalized by t_r
  double reflectivity_rmse = kNaN;
  double reflectivity_psnr = kNaN;  ///< on reflectivity normalized to [0,1]
  long invalid_pixels = 0;          ///< no detection in the window
  long solver_failures = 0;         ///< bracket failures (fell back to mean)
};

struct Reconstruction {
  int width = 0;
  int height = 0;
  std::vector<double> delay;         ///< NaN where invalid
  std::vector<double> reflectivity;  ///< NaN where invalid
  ReconstructionMetrics metrics;
};

struct ReconstructOptions {
  double alpha_cap = 10.0;  ///< upper bound for the mixture reflectivity
  SolverConfig solver;
  int threads = 1;
};

/// Pools each pixel's valid timestamps over the first `window` frames and
/// estimates per-pixel depth and reflectivity.
///
/// First-photon acquisition censors the per-frame count at one, so the
/// all-detection count law does not apply to the pooled pool size; the
/// joint mode therefore estimates reflectivity from the conditional
/// signal/noise mixture weight of the pooled timestamps, which stays
/// informative at any flux. The baseline mode applies the plain count
/// estimate with window * N_r cycles, which is meaningful only in the
/// low-flux regime where censoring is rare.
inline Reconstruction reconstruct_frames(const FrameStack& stack, int window,
                                         ReconstructMode mode,
                                         const ReconstructOptions& opt = {}) {
  if (window < 1)
    throw std::invalid_argument("reconstruct_frames: window must be >= 1");
  if (window > stack.n_frames)
    throw std::invalid_argument(
        "reconstruct_frames: window exceeds available frames");

  const SceneGrid& grid = stack.scene;
  Reconstruction out;
  out.width = stack.width;
  out.height = stack.height;
  out.delay.assign(grid.size(), kNaN);
  out.reflectivity.assign(grid.size(), kNaN);

  std::vector<long> failures(grid.size(), 0);
  parallel_for(grid.size(), opt.threads, [&](std::size_t k) {
    const int row = static_cast<int>(k) / stack.width;
    const int col = static_cast<int>(k) % stack.width;
    std::vector<double> pool;
    pool.reserve(static_cast<std::size_t>(window));
    for (int f = 0; f < window; ++f) {
      const double t = stack.at(f, row, col);
      if (!std::isnan(t)) pool.push_back(t);
    }
    if (pool.empty()) return;

    const PixelScene scene = grid.at(row, col);
    const std::span<const double> ts(pool);

    if (mode == ReconstructMode::kBaseline) {
      out.delay[k] = depth_sample_mean(ts, scene).value;
      PixelScene pooled = scene;
      pooled.acq.repetitions = scene.acq.repetitions * window;
      out.reflectivity[k] = reflectivity_count_mle(pool.size(), pooled).value;
      return;
    }

    const double tau0 = coarse_init_delay(ts, scene);
    const EstimateReport alpha0 =
        reflectivity_mixture_mle(ts, tau0, scene, opt.alpha_cap, opt.solver);
    double tau_hat = tau0;
    if (alpha0.value > 0.0) {
      const EstimateReport dep = depth_mle_known_alpha(ts, alpha0.value, scene,
                                                       tau0, opt.solver);
      if (dep.status == SolverStatus::kOk) {
        tau_hat = dep.value;
      } else {
        tau_hat = depth_sample_mean(ts, scene).value;
        failures[k] = 1;
      }
    } else {
      // No signal evidence; the mean is as good as any depth.
      tau_hat = depth_sample_mean(ts, scene).value;
    }
    const EstimateReport alpha_hat =
        reflectivity_mixture_mle(ts, tau_hat, scene, opt.alpha_cap, opt.solver);
    out.delay[k] = tau_hat;
    out.reflectivity[k] = alpha_hat.value;
  });

  // Metrics against ground truth over valid pixels.
  const double t_r = grid.acq.repetition_period;
  double depth_sq = 0.0;
  double refl_sq = 0.0;
  double alpha_max = 0.0;
  long n_valid = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    out.metrics.solver_failures += failures[k];
    alpha_max = std::max(alpha_max, grid.reflectivity[k]);
    if (std::isnan(out.delay[k])) {
      ++out.metrics.invalid_pixels;
      continue;
    }
    ++n_valid;
    const double dd = (out.delay[k] - grid.delay[k]) / t_r;
    depth_sq += dd * dd;
    const double dr = out.reflectivity[k] - grid.reflectivity[k];
    refl_sq += dr * dr;
  }
  if (n_valid > 0) {
    out.metrics.depth_rmse = std::sqrt(depth_sq / static_cast<double>(n_valid));
    out.metrics.reflectivity_rmse =
        std::sqrt(refl_sq / static_cast<double>(n_valid));
    if (alpha_max > 0.0) {
      const double norm_mse =
          refl_sq / static_cast<double>(n_valid) / (alpha_max * alpha_max);
      out.metrics.reflectivity_psnr =
          norm_mse > 0.0 ? -10.0 * std::log10(norm_mse) : kInf;
    }
  }
  return out;
}

}  // namespace splidar
