#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "splidar/crlb.hpp"
#include "splidar/csv.hpp"
#include "splidar/estimators.hpp"
#include "splidar/experiments.hpp"
#include "splidar/manifest.hpp"
#include "splidar/rng.hpp"
#include "splidar/scene.hpp"
#include "splidar/simulator.hpp"
#include "splidar/stats.hpp"

namespace splidar {

/// Seed shipped with the verification suite.
inline constexpr std::uint64_t kDefaultVerifySeed = 20250810;

struct CriterionResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  std::vector<CriterionResult> criteria;
  std::vector<std::string> outputs;  ///< files written (when out_dir given)

  bool all_passed() const {
    for (const auto& c : criteria)
      if (!c.passed) return false;
    return true;
  }
};

struct VerificationOptions {
  std::uint64_t seed = kDefaultVerifySeed;
  int threads = 1;
  std::string out_dir;  ///< empty: compute-only, no files written
};

namespace detail {

/// The desk-scale verification preset: t_r = 10, N_r = 1000, tau = 4,
/// alpha = 0.5, sigma_t = 0.2, photon level 10.
inline SweepSpec verification_sweep_spec(EstimatorPair pair,
                                         std::uint64_t seed) {
  SweepSpec spec;
  spec.sbr_values = {0.5, 1.0, 2.0, 5.0, 10.0};
  spec.photon_level = 10.0;
  spec.repetitions = 1000;
  spec.quantum_efficiency = 1.0;
  spec.alpha = 0.5;
  spec.tau = 4.0;
  spec.sigma_t = 0.2;
  spec.repetition_period = 10.0;
  spec.trials = 1000;
  spec.seed = seed;
  spec.pair = pair;
  spec.init = InitMode::kOracle;
  return spec;
}

inline PixelScene noiseless_verification_scene() {
  PixelScene scene;
  scene.reflectivity = 0.5;
  scene.delay = 4.0;
  scene.background_rate = 0.0;
  scene.pulse = PulseShape{0.02, 0.2};  // eta*alpha*S = 0.01, level 10
  scene.acq = AcquisitionConfig{10.0, 1000, 1.0};
  return scene;
}

/// Random-but-seeded scene + draw for the derivative and monotonicity
/// criteria. Redraws until at least one timestamp lands.
struct RandomInstance {
  PixelScene scene;
  std::vector<double> timestamps;
  double alpha_eval = 0.0;
  double tau_eval = 0.0;
};

inline RandomInstance random_instance(std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng::stream(seed, StreamTag::kInstance, index);
  RandomInstance inst;
  const double alpha = rng.uniform(0.2, 1.5);
  const double sbr_value = rng.uniform(0.4, 8.0);
  const double level = rng.uniform(6.0, 20.0);
  const double tau = rng.uniform(2.5, 7.5);
  inst.scene = scene_from_constraints(level, sbr_value, alpha, tau,
                                      AcquisitionConfig{10.0, 1000, 1.0}, 0.2);
  for (int attempt = 0; attempt < 64 && inst.timestamps.empty(); ++attempt)
    inst.timestamps = sample_detections(inst.scene, rng).timestamps;
  inst.alpha_eval = rng.uniform(0.05, 2.5);
  inst.tau_eval = tau + rng.uniform(-0.3, 0.3);
  return inst;
}

inline std::string fmt(double v) { return csv_number(v); }

}  // namespace detail

/// Criterion 1: the timestamp-based reflectivity bound never exceeds the
/// count-based one over the SBR grid (strictly for b_lambda > 0), with
/// equality at b_lambda = 0.
inline CriterionResult criterion_theorem2(VerificationReport* report,
                                          const std::string& out_dir) {
  CriterionResult res{"theorem2-certification"};
  std::vector<PixelScene> scenes;
  for (double s : {0.5, 1.0, 2.0, 5.0, 10.0})
    scenes.push_back(scene_from_constraints(
        10.0, s, 0.5, 4.0, AcquisitionConfig{10.0, 1000, 1.0}, 0.2));
  scenes.push_back(detail::noiseless_verification_scene());

  // Certifying equality at rel. 1e-9 needs quadrature well below that.
  const QuadratureConfig quad{1e-16, 1e-12, 8000};
  const Theorem2Report theorem = verify_theorem2(scenes, quad);
  res.passed = theorem.all_hold;
  std::ostringstream detail;
  detail << "ratios:";
  for (const auto& row : theorem.rows)
    detail << " " << detail::fmt(row.report.ratio);
  if (!theorem.all_hold) detail << " | " << theorem.failure;
  res.detail = detail.str();

  if (!out_dir.empty()) {
    CsvTable table;
    table.header = {"sbr", "b_lambda", "crlb_count", "crlb_timestamp",
                    "ratio", "quad_error"};
    for (const auto& row : theorem.rows)
      table.rows.push_back({sbr(row.scene), row.scene.background_rate,
                            row.report.crlb_count, row.report.crlb_timestamp,
                            row.report.ratio, row.report.quad_error});
    const std::string path = out_dir + "/crlb_grid.csv";
    write_csv(path, table);
    report->outputs.push_back(path);
  }
  return res;
}

/// Criterion 2: with b_lambda = 0 the joint solver agrees with the
/// closed-form pair (timestamp mean, m / (N_r eta S)) to 1e-6.
inline CriterionResult criterion_corollary1(std::uint64_t seed) {
  CriterionResult res{"corollary1-equivalence"};
  const PixelScene scene = detail::noiseless_verification_scene();
  double worst = 0.0;
  int skipped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = Rng::stream(seed, StreamTag::kTrial, 1, trial);
    const TimestampDraw draw = sample_detections(scene, rng);
    if (draw.timestamps.empty()) {
      ++skipped;
      continue;
    }
    const std::span<const double> ts(draw.timestamps);
    const double tau0 = coarse_init_delay(ts, scene);
    const double alpha0 = reflectivity_count_mle(draw.count(), scene).value;
    const JointEstimate joint = joint_mle(ts, scene, tau0, alpha0);
    const double mean = depth_sample_mean(ts, scene).value;
    const double closed_alpha = reflectivity_count_mle(draw.count(), scene).value;
    worst = std::max(worst, std::abs(joint.depth.value - mean));
    worst = std::max(worst, std::abs(joint.reflectivity.value - closed_alpha));
  }
  res.passed = worst <= 1e-6 && skipped < 100;
  res.detail = "max |joint - closed form| = " + detail::fmt(worst) +
               (skipped ? " (skipped " + std::to_string(skipped) +
                              " empty draws)"
                        : "");
  return res;
}

/// Criterion 3: side information lowers the Monte Carlo MSE at every SBR
/// for both estimator pairs, with a wider gap at SBR 0.5 than at SBR 10.
inline CriterionResult criterion_fig2_ordering(VerificationReport* report,
                                               std::uint64_t seed, int threads,
                                               const std::string& out_dir) {
  CriterionResult res{"information-sharing-ordering"};
  std::ostringstream detail;
  bool ok = true;
  for (EstimatorPair pair :
       {EstimatorPair::kDepth, EstimatorPair::kReflectivity}) {
    const SweepSpec spec = detail::verification_sweep_spec(pair, seed);
    const SweepResult sweep = run_sweep(spec, threads);
    const bool depth_pair = pair == EstimatorPair::kDepth;
    detail << (depth_pair ? "depth" : "reflectivity") << ":";
    double ratio_low = 0.0, ratio_high = 0.0;
    for (const SweepRow& row : sweep.rows) {
      if (!(row.mse_with <= row.mse_without)) ok = false;
      const double ratio = row.mse_without / row.mse_with;
      if (row.sbr == 0.5) ratio_low = ratio;
      if (row.sbr == 10.0) ratio_high = ratio;
      detail << " " << detail::fmt(ratio);
    }
    if (!(ratio_low > ratio_high)) ok = false;
    detail << ";";

    if (!out_dir.empty()) {
      CsvTable table;
      table.header = {"sbr", "trials", "failures", "mse_with", "mse_without",
                      "crlb_count", "crlb_timestamp"};
      for (const SweepRow& row : sweep.rows)
        table.rows.push_back({row.sbr, static_cast<double>(row.trials),
                              static_cast<double>(row.failures), row.mse_with,
                              row.mse_without, row.crlb_count,
                              row.crlb_timestamp});
      const std::string path =
          out_dir + (depth_pair ? "/sweep_depth.csv" : "/sweep_reflectivity.csv");
      write_csv(path, table);
      report->outputs.push_back(path);
    }
  }
  res.passed = ok;
  res.detail = "mse_without/mse_with per sbr " + detail.str();
  return res;
}

/// Criterion 4: quadrupling N_r shrinks both timestamp-based estimators'
/// MSE by a factor in [2.5, 6] (the bounds scale as 1/N_r).
inline CriterionResult criterion_consistency(std::uint64_t seed, int threads) {
  CriterionResult res{"estimator-consistency"};
  const PixelScene base = scene_from_constraints(
      10.0, 1.0, 0.5, 4.0, AcquisitionConfig{10.0, 1000, 1.0}, 0.2);
  PixelScene scaled = base;
  scaled.acq.repetitions = 4000;

  const int trials = 1000;
  struct Accum {
    double depth = 0.0;
    double refl = 0.0;
    long n_depth = 0;
    long n_refl = 0;
  };
  const auto run = [&](const PixelScene& scene, std::uint64_t tag) {
    std::vector<double> depth_sq(trials, kNaN), refl_sq(trials, kNaN);
    parallel_for(trials, threads, [&](std::size_t t) {
      Rng rng = Rng::stream(seed, StreamTag::kTrial, tag, t);
      const TimestampDraw draw = sample_detections(scene, rng);
      const std::span<const double> ts(draw.timestamps);
      const EstimateReport refl =
          reflectivity_mle_known_tau(ts, scene.delay, scene);
      if (refl.status == SolverStatus::kOk) {
        const double d = refl.value - scene.reflectivity;
        refl_sq[t] = d * d;
      }
      if (!ts.empty()) {
        const EstimateReport dep = depth_mle_known_alpha(
            ts, scene.reflectivity, scene, scene.delay);
        if (dep.status == SolverStatus::kOk) {
          const double d = dep.value - scene.delay;
          depth_sq[t] = d * d;
        }
      }
    });
    Accum acc;
    for (int t = 0; t < trials; ++t) {
      if (!std::isnan(depth_sq[t])) {
        acc.depth += depth_sq[t];
        ++acc.n_depth;
      }
      if (!std::isnan(refl_sq[t])) {
        acc.refl += refl_sq[t];
        ++acc.n_refl;
      }
    }
    acc.depth /= static_cast<double>(acc.n_depth);
    acc.refl /= static_cast<double>(acc.n_refl);
    return acc;
  };

  const Accum at_1000 = run(base, 2);
  const Accum at_4000 = run(scaled, 3);
  const double depth_ratio = at_1000.depth / at_4000.depth;
  const double refl_ratio = at_1000.refl / at_4000.refl;
  res.passed = depth_ratio >= 2.5 && depth_ratio <= 6.0 && refl_ratio >= 2.5 &&
               refl_ratio <= 6.0;
  res.detail = "mse(N_r=1000)/mse(N_r=4000): depth " +
               detail::fmt(depth_ratio) + ", reflectivity " +
               detail::fmt(refl_ratio);
  return res;
}

/// Criterion 5: the count sampler fits Poisson(10) (chi-square, 1% level)
/// and detected first-photon timestamps fit the signal/noise mixture
/// (Kolmogorov-Smirnov, 1% level), at 1e5 draws each.
inline CriterionResult criterion_distribution_fidelity(
    VerificationReport* report, std::uint64_t seed,
    const std::string& out_dir) {
  CriterionResult res{"simulator-distribution-fidelity"};
  const PixelScene scene = scene_from_constraints(
      10.0, 1.0, 0.5, 4.0, AcquisitionConfig{10.0, 1000, 1.0}, 0.2);
  const std::size_t n = 100000;

  std::vector<std::uint64_t> counts(n);
  {
    Rng rng = Rng::stream(seed, StreamTag::kCount, 0);
    for (std::size_t i = 0; i < n; ++i) counts[i] = sample_count(scene, rng);
  }
  const Chi2Gof chi2 = chi2_poisson_gof(counts, scene.frame_energy());

  std::vector<double> first;
  first.reserve(n);
  {
    Rng rng = Rng::stream(seed, StreamTag::kFirstPhoton, 0);
    while (first.size() < n) {
      const auto t = sample_first_photon(scene, rng);
      if (t) first.push_back(*t);
    }
  }
  const double ks = ks_statistic(
      first, [&](double t) { return first_photon_cdf(scene, 0.0, t); });
  const double ks_crit = ks_critical_1pct(n);

  res.passed = chi2.passed && ks < ks_crit;
  res.detail = "chi2 " + detail::fmt(chi2.statistic) + " < " +
               detail::fmt(chi2.critical_1pct) + " (df " +
               std::to_string(chi2.df) + "); ks " + detail::fmt(ks) + " < " +
               detail::fmt(ks_crit);
  if (!out_dir.empty()) {
    const std::string path = out_dir + "/distribution_fit.txt";
    std::ofstream out(path, std::ios::binary);
    out << "chi2_statistic = " << detail::fmt(chi2.statistic) << "\n"
        << "chi2_critical_1pct = " << detail::fmt(chi2.critical_1pct) << "\n"
        << "chi2_df = " << chi2.df << "\n"
        << "ks_statistic = " << detail::fmt(ks) << "\n"
        << "ks_critical_1pct = " << detail::fmt(ks_crit) << "\n";
    report->outputs.push_back(path);
  }
  return res;
}

/// Criterion 6: analytic likelihood derivatives match central finite
/// differences to rel. 1e-5 on 100 seeded random instances.
inline CriterionResult criterion_derivatives(std::uint64_t seed) {
  CriterionResult res{"derivative-correctness"};
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const detail::RandomInstance inst = detail::random_instance(seed, i);
    if (inst.timestamps.empty()) continue;
    const std::span<const double> ts(inst.timestamps);
    const PixelScene& scene = inst.scene;
    const double t_r = scene.acq.repetition_period;

    const double h_tau = 1e-6 * t_r;
    const double fd_tau = (loglik(ts, inst.alpha_eval, inst.tau_eval + h_tau,
                                  scene) -
                           loglik(ts, inst.alpha_eval, inst.tau_eval - h_tau,
                                  scene)) /
                          (2.0 * h_tau);
    const double an_tau = dloglik_dtau(ts, inst.alpha_eval, inst.tau_eval,
                                       scene);
    worst = std::max(worst, std::abs(fd_tau - an_tau) /
                                std::max(1.0, std::abs(an_tau)));

    const double h_alpha = 1e-6 * std::max(1.0, inst.alpha_eval);
    const double fd_alpha =
        (loglik(ts, inst.alpha_eval + h_alpha, inst.tau_eval, scene) -
         loglik(ts, inst.alpha_eval - h_alpha, inst.tau_eval, scene)) /
        (2.0 * h_alpha);
    const double an_alpha =
        dloglik_dalpha(ts, inst.alpha_eval, inst.tau_eval, scene);
    worst = std::max(worst, std::abs(fd_alpha - an_alpha) /
                                std::max(1.0, std::abs(an_alpha)));
  }
  res.passed = worst <= 1e-5;
  res.detail = "max relative mismatch = " + detail::fmt(worst);
  return res;
}

/// Criterion 7: d loglik / d alpha is strictly decreasing on [0, 5] for
/// every seeded instance, so the reflectivity bisection is well posed.
inline CriterionResult criterion_monotonicity(std::uint64_t seed) {
  CriterionResult res{"alpha-derivative-monotonicity"};
  bool ok = true;
  for (std::uint64_t i = 0; i < 100 && ok; ++i) {
    const detail::RandomInstance inst = detail::random_instance(seed, i);
    if (inst.timestamps.empty()) continue;
    const std::span<const double> ts(inst.timestamps);
    double previous = kInf;
    for (int step = 0; step <= 50; ++step) {
      const double alpha = 0.1 * step;
      const double value =
          dloglik_dalpha(ts, alpha, inst.scene.delay, inst.scene);
      if (!(value < previous)) {
        ok = false;
        break;
      }
      previous = value;
    }
  }
  res.passed = ok;
  res.detail = ok ? "strictly decreasing on all instances"
                  : "monotonicity violated";
  return res;
}

/// Criterion 8: on a 32x32 static scene at photon level 10, pooling more
/// frames strictly improves both depth RMSE and reflectivity RMSE.
inline CriterionResult criterion_frame_pipeline(VerificationReport* report,
                                                std::uint64_t seed,
                                                int threads,
                                                const std::string& out_dir) {
  CriterionResult res{"frame-pipeline-improvement"};
  const PixelScene reference = scene_from_constraints(
      10.0, 5.0, 0.5, 4.0, AcquisitionConfig{10.0, 1000, 1.0}, 0.2);

  SceneGrid grid;
  grid.width = 32;
  grid.height = 32;
  grid.pulse = reference.pulse;
  grid.acq = reference.acq;
  grid.reflectivity.resize(grid.size());
  grid.delay.resize(grid.size());
  grid.background_rate.assign(grid.size(), reference.background_rate);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const std::size_t k = grid.index(row, col);
      grid.delay[k] = 2.0 + 6.0 * row / (grid.height - 1.0);
      grid.reflectivity[k] =
          reference.reflectivity * (0.1 + 0.9 * col / (grid.width - 1.0));
    }
  }

  const FrameStack stack = simulate_frames(grid, 10, seed, {}, threads);
  ReconstructOptions opt;
  opt.threads = threads;
  std::vector<double> depth_rmse, refl_rmse;
  std::ostringstream detail;
  for (int window : {1, 5, 10}) {
    const Reconstruction rec =
        reconstruct_frames(stack, window, ReconstructMode::kJoint, opt);
    depth_rmse.push_back(rec.metrics.depth_rmse);
    refl_rmse.push_back(rec.metrics.reflectivity_rmse);
    detail << " w" << window << ": depth " << detail::fmt(rec.metrics.depth_rmse)
           << ", refl " << detail::fmt(rec.metrics.reflectivity_rmse) << ";";
  }
  res.passed = depth_rmse[0] > depth_rmse[1] && depth_rmse[1] > depth_rmse[2] &&
               refl_rmse[0] > refl_rmse[1] && refl_rmse[1] > refl_rmse[2];
  res.detail = "rmse over windows" + detail.str();

  if (!out_dir.empty()) {
    const std::string path = out_dir + "/frame_metrics.txt";
    std::ofstream out(path, std::ios::binary);
    const char* names[3] = {"window_1", "window_5", "window_10"};
    for (int i = 0; i < 3; ++i) {
      out << names[i] << ".depth_rmse = " << detail::fmt(depth_rmse[i]) << "\n";
      out << names[i] << ".reflectivity_rmse = " << detail::fmt(refl_rmse[i])
          << "\n";
    }
    report->outputs.push_back(path);
  }
  return res;
}

/// Runs criteria 1-8. When out_dir is set, writes the CSV/metric files, a
/// deterministic verify_report.txt and a manifest covering all outputs.
/// (Byte-level reproducibility of this whole bundle is the ninth criterion,
/// checked by re-running the CLI.)
inline VerificationReport run_verification(const VerificationOptions& opt) {
  VerificationReport report;
  report.criteria.push_back(criterion_theorem2(&report, opt.out_dir));
  report.criteria.push_back(criterion_corollary1(opt.seed));
  report.criteria.push_back(
      criterion_fig2_ordering(&report, opt.seed, opt.threads, opt.out_dir));
  report.criteria.push_back(criterion_consistency(opt.seed, opt.threads));
  report.criteria.push_back(
      criterion_distribution_fidelity(&report, opt.seed, opt.out_dir));
  report.criteria.push_back(criterion_derivatives(opt.seed));
  report.criteria.push_back(criterion_monotonicity(opt.seed));
  report.criteria.push_back(
      criterion_frame_pipeline(&report, opt.seed, opt.threads, opt.out_dir));

  if (!opt.out_dir.empty()) {
    const std::string path = opt.out_dir + "/verify_report.txt";
    std::ofstream out(path, std::ios::binary);
    for (const CriterionResult& c : report.criteria)
      out << (c.passed ? "PASS" : "FAIL") << " " << c.name << ": " << c.detail
          << "\n";
    report.outputs.push_back(path);

    // Threads are deliberately not recorded: results do not depend on them.
    RunManifest manifest;
    manifest.command = "verify";
    manifest.seed = opt.seed;
    manifest.outputs = report.outputs;
    write_manifest(opt.out_dir + "/verify.manifest", manifest);
  }
  return report;
}

}  // namespace splidar
