// splidar: single-photon LiDAR simulation, estimation and bound analysis.
//
// Subcommands: sim, sweep, scatter, crlb, reconstruct, verify.
// Exit codes: 0 success, 2 usage/config error, 3 numerical-verification
// failure, 4 I/O error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splidar/acceptance.hpp"
#include "splidar/config.hpp"
#include "splidar/crlb.hpp"
#include "splidar/csv.hpp"
#include "splidar/estimators.hpp"
#include "splidar/experiments.hpp"
#include "splidar/framestack_io.hpp"
#include "splidar/manifest.hpp"
#include "splidar/pgm.hpp"
#include "splidar/scene_io.hpp"
#include "splidar/simulator.hpp"
#include "splidar/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;
constexpr int kExitIo = 4;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

std::uint64_t resolve_seed(const GlobalFlags& flags, std::uint64_t fallback) {
  return flags.seed ? *flags.seed : fallback;
}

void ensure_parent_dir(const std::string& path) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

splidar::SweepSpec load_sweep_spec(const std::string& path) {
  using splidar::ConfigError;
  const splidar::KeyValueFile kv = splidar::KeyValueFile::load(path);
  kv.restrict_keys({"sbr", "photon_level", "n_r", "eta", "alpha", "tau",
                    "sigma_t", "t_r", "trials", "seed", "pair", "init",
                    "sbr_convention"});
  for (const char* key :
       {"sbr", "photon_level", "n_r", "alpha", "tau", "sigma_t", "t_r",
        "trials", "pair"})
    kv.require(key);

  splidar::SweepSpec spec;
  spec.sbr_values = kv.get_double_list("sbr");
  spec.photon_level = kv.get_double("photon_level");
  spec.repetitions = kv.get_long("n_r");
  spec.quantum_efficiency = kv.get_double("eta", 1.0);
  spec.alpha = kv.get_double("alpha");
  spec.tau = kv.get_double("tau");
  spec.sigma_t = kv.get_double("sigma_t");
  spec.repetition_period = kv.get_double("t_r");
  spec.trials = static_cast<int>(kv.get_long("trials"));
  spec.seed = kv.has("seed") ? kv.get_u64("seed") : 0;

  const std::string pair = kv.get_string("pair");
  if (pair == "depth") {
    spec.pair = splidar::EstimatorPair::kDepth;
  } else if (pair == "reflectivity") {
    spec.pair = splidar::EstimatorPair::kReflectivity;
  } else {
    throw ConfigError(path + ": pair must be depth or reflectivity");
  }
  const std::string init = kv.get_string("init", "oracle");
  if (init == "oracle") {
    spec.init = splidar::InitMode::kOracle;
  } else if (init == "coarse") {
    spec.init = splidar::InitMode::kCoarse;
  } else {
    throw ConfigError(path + ": init must be oracle or coarse");
  }
  spec.convention = splidar::parse_sbr_convention(
      kv.get_string("sbr_convention", "signal_energy"));
  return spec;
}

void append_sweep_spec_config(splidar::RunManifest& manifest,
                              const splidar::SweepSpec& spec) {
  manifest.add_config("pair", spec.pair == splidar::EstimatorPair::kDepth
                                  ? "depth"
                                  : "reflectivity");
  manifest.add_config("init",
                      spec.init == splidar::InitMode::kOracle ? "oracle"
                                                              : "coarse");
  manifest.add_config_double("photon_level", spec.photon_level);
  manifest.add_config("n_r", std::to_string(spec.repetitions));
  manifest.add_config_double("eta", spec.quantum_efficiency);
  manifest.add_config_double("alpha", spec.alpha);
  manifest.add_config_double("tau", spec.tau);
  manifest.add_config_double("sigma_t", spec.sigma_t);
  manifest.add_config_double("t_r", spec.repetition_period);
  manifest.add_config("trials", std::to_string(spec.trials));
  std::string sbrs;
  for (double s : spec.sbr_values)
    sbrs += (sbrs.empty() ? "" : ",") + splidar::csv_number(s);
  manifest.add_config("sbr", sbrs);
}

int cmd_sim(const GlobalFlags& flags, const std::string& scene_path,
            int n_frames, int width, int height,
            const std::string& reflectance_pgm, const std::string& depth_pgm,
            double z_min, double z_max, double jitter_sigma,
            const std::string& mode_name) {
  const splidar::ScenePreset preset = splidar::load_scene_preset(scene_path);
  const std::uint64_t seed = resolve_seed(flags, 0);

  splidar::FirstPhotonOptions opt;
  opt.jitter_sigma = jitter_sigma;
  if (mode_name == "mixture") {
    opt.mode = splidar::FirstPhotonMode::kMixture;
  } else if (mode_name == "order_statistic") {
    opt.mode = splidar::FirstPhotonMode::kOrderStatistic;
  } else {
    throw splidar::ConfigError("mode must be mixture or order_statistic");
  }

  splidar::FrameStackSidecar sidecar;
  sidecar.seed = seed;
  sidecar.options = opt;

  splidar::SceneGrid grid;
  if (!reflectance_pgm.empty()) {
    const splidar::PgmImage gamma_img = splidar::read_pgm(reflectance_pgm);
    grid.width = gamma_img.width;
    grid.height = gamma_img.height;
    grid.pulse = preset.scene.pulse;
    grid.acq = preset.scene.acq;
    const std::vector<double> gamma = gamma_img.mapped(0.0, 1.0);
    grid.reflectivity.resize(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i)
      grid.reflectivity[i] = preset.scene.reflectivity * gamma[i];
    if (!depth_pgm.empty()) {
      const splidar::PgmImage depth_img = splidar::read_pgm(depth_pgm);
      if (depth_img.width != grid.width || depth_img.height != grid.height)
        throw splidar::ConfigError("reflectance and depth maps disagree in size");
      const std::vector<double> z = depth_img.mapped(z_min, z_max);
      grid.delay.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        grid.delay[i] = 2.0 * z[i] / splidar::kSpeedOfLight;
    } else {
      grid.delay.assign(gamma.size(), preset.scene.delay);
    }
    grid.background_rate.assign(gamma.size(), preset.scene.background_rate);
    splidar::validate(grid);
    sidecar.grid_kind = "pgm";
    sidecar.scene_entries = splidar::scene_config_entries(preset.scene);
    sidecar.scene_entries.emplace_back("reflectance_pgm", reflectance_pgm);
    if (!depth_pgm.empty()) {
      sidecar.scene_entries.emplace_back("depth_pgm", depth_pgm);
      sidecar.scene_entries.emplace_back("z_min", splidar::csv_number(z_min));
      sidecar.scene_entries.emplace_back("z_max", splidar::csv_number(z_max));
    }
  } else {
    grid = splidar::uniform_grid(preset.scene, width, height);
    sidecar.grid_kind = "flat";
    sidecar.scene_entries = splidar::scene_config_entries(preset.scene);
  }

  if (!splidar::pulse_support_ok(preset.scene))
    std::cerr << "warning: pulse not fully supported inside [0, t_r); "
                 "closed-form energies are approximate\n";

  const splidar::FrameStack stack =
      splidar::simulate_frames(grid, n_frames, seed, opt, flags.threads);
  ensure_parent_dir(flags.out);
  splidar::write_framestack(flags.out, stack, sidecar);

  splidar::RunManifest manifest;
  manifest.command = "sim";
  manifest.seed = seed;
  manifest.add_config("scene_file", scene_path);
  manifest.add_config("n_frames", std::to_string(n_frames));
  manifest.add_config("grid", sidecar.grid_kind);
  manifest.add_config("first_photon_mode", mode_name);
  manifest.add_config_double("jitter_sigma", jitter_sigma);
  for (const auto& [k, v] : sidecar.scene_entries) manifest.add_config(k, v);
  manifest.outputs = {flags.out, flags.out + ".meta"};
  splidar::write_manifest(flags.out + ".manifest", manifest);

  std::cout << "wrote " << flags.out << " (" << stack.width << "x"
            << stack.height << "x" << stack.n_frames << ", valid fraction "
            << stack.valid_fraction() << ")\n";
  return kExitOk;
}

int cmd_sweep(const GlobalFlags& flags, const std::string& spec_path) {
  splidar::SweepSpec spec = load_sweep_spec(spec_path);
  spec.seed = resolve_seed(flags, spec.seed);

  const splidar::SweepResult result = splidar::run_sweep(spec, flags.threads);
  ensure_parent_dir(flags.out);

  splidar::CsvTable table;
  table.header = {"sbr", "trials", "failures", "mse_with", "mse_without",
                  "crlb_count", "crlb_timestamp"};
  splidar::CsvTable unclamped = table;
  for (const splidar::SweepRow& row : result.rows) {
    table.rows.push_back({row.sbr, static_cast<double>(row.trials),
                          static_cast<double>(row.failures), row.mse_with,
                          row.mse_without, row.crlb_count, row.crlb_timestamp});
    unclamped.rows.push_back({row.sbr, static_cast<double>(row.trials),
                              static_cast<double>(row.failures),
                              row.mse_with_unclamped, row.mse_without_unclamped,
                              row.crlb_count, row.crlb_timestamp});
  }
  splidar::write_csv(flags.out, table);
  const std::string unclamped_path = flags.out + ".unclamped.csv";
  splidar::write_csv(unclamped_path, unclamped);

  splidar::RunManifest manifest;
  manifest.command = "sweep";
  manifest.seed = spec.seed;
  manifest.add_config("spec_file", spec_path);
  append_sweep_spec_config(manifest, spec);
  manifest.outputs = {flags.out, unclamped_path};
  splidar::write_manifest(flags.out + ".manifest", manifest);
  std::cout << "wrote " << flags.out << " (" << result.rows.size()
            << " rows)\n";
  return kExitOk;
}

int cmd_scatter(const GlobalFlags& flags, const std::string& spec_path) {
  splidar::SweepSpec spec = load_sweep_spec(spec_path);
  spec.seed = resolve_seed(flags, spec.seed);

  const std::vector<splidar::ScatterRow> rows =
      splidar::run_scatter(spec, flags.threads);
  ensure_parent_dir(flags.out);

  splidar::CsvTable table;
  table.header = {"sbr", "trial", "truth", "est_with", "est_without"};
  for (const splidar::ScatterRow& row : rows)
    table.rows.push_back({row.sbr, static_cast<double>(row.trial), row.truth,
                          row.est_with, row.est_without});
  splidar::write_csv(flags.out, table);

  splidar::RunManifest manifest;
  manifest.command = "scatter";
  manifest.seed = spec.seed;
  manifest.add_config("spec_file", spec_path);
  append_sweep_spec_config(manifest, spec);
  manifest.outputs = {flags.out};
  splidar::write_manifest(flags.out + ".manifest", manifest);
  std::cout << "wrote " << flags.out << " (" << rows.size() << " rows)\n";
  return kExitOk;
}

int cmd_crlb(const GlobalFlags& flags, const std::string& grid_path) {
  const splidar::KeyValueFile kv = splidar::KeyValueFile::load(grid_path);
  kv.restrict_keys({"sbr", "photon_level", "n_r", "eta", "alpha", "tau",
                    "sigma_t", "t_r", "include_zero_background",
                    "sbr_convention"});
  for (const char* key :
       {"sbr", "photon_level", "n_r", "alpha", "tau", "sigma_t", "t_r"})
    kv.require(key);

  const splidar::AcquisitionConfig acq{kv.get_double("t_r"),
                                       kv.get_long("n_r"),
                                       kv.get_double("eta", 1.0)};
  const splidar::SbrConvention conv = splidar::parse_sbr_convention(
      kv.get_string("sbr_convention", "signal_energy"));
  const double photon_level = kv.get_double("photon_level");
  const double alpha = kv.get_double("alpha");
  const double tau = kv.get_double("tau");
  const double sigma_t = kv.get_double("sigma_t");

  std::vector<splidar::PixelScene> scenes;
  for (double s : kv.get_double_list("sbr"))
    scenes.push_back(splidar::scene_from_constraints(photon_level, s, alpha,
                                                     tau, acq, sigma_t, conv));
  if (kv.get_bool("include_zero_background", true)) {
    splidar::PixelScene noiseless = scenes.front();
    noiseless.background_rate = 0.0;
    scenes.push_back(noiseless);
  }

  // Tighter than the reporting default so the equality gate at b_lambda = 0
  // is certified with headroom.
  const splidar::QuadratureConfig quad{1e-16, 1e-12, 8000};
  const splidar::Theorem2Report report = splidar::verify_theorem2(scenes, quad);

  ensure_parent_dir(flags.out);
  splidar::CsvTable table;
  table.header = {"sbr", "b_lambda", "crlb_count", "crlb_timestamp", "ratio",
                  "quad_error"};
  bool quad_failure = false;
  for (const splidar::Theorem2Row& row : report.rows) {
    table.rows.push_back({splidar::sbr(row.scene, conv),
                          row.scene.background_rate, row.report.crlb_count,
                          row.report.crlb_timestamp, row.report.ratio,
                          row.report.quad_error});
    if (!row.report.converged) quad_failure = true;
  }
  splidar::write_csv(flags.out, table);

  splidar::RunManifest manifest;
  manifest.command = "crlb";
  manifest.seed = resolve_seed(flags, 0);
  manifest.add_config("grid_file", grid_path);
  manifest.add_config_double("photon_level", photon_level);
  manifest.add_config_double("alpha", alpha);
  manifest.outputs = {flags.out};
  splidar::write_manifest(flags.out + ".manifest", manifest);

  if (quad_failure) {
    std::cerr << "error: quadrature did not converge on at least one row\n";
    return kExitVerify;
  }
  if (!report.all_hold) {
    std::cerr << "error: " << report.failure << "\n";
    return kExitVerify;
  }
  std::cout << "wrote " << flags.out << " (" << report.rows.size()
            << " rows, bound comparison holds)\n";
  return kExitOk;
}

int cmd_reconstruct(const GlobalFlags& flags, const std::string& stack_path,
                    int window, const std::string& mode_name,
                    double alpha_cap) {
  const splidar::FrameStack stack =
      splidar::load_framestack_with_scene(stack_path);
  const splidar::ReconstructMode mode =
      splidar::parse_reconstruct_mode(mode_name);
  if (window > stack.n_frames)
    throw splidar::ConfigError("window exceeds the stack's frame count");

  splidar::ReconstructOptions opt;
  opt.alpha_cap = alpha_cap;
  opt.threads = flags.threads;
  const splidar::Reconstruction rec =
      splidar::reconstruct_frames(stack, window, mode, opt);

  ensure_parent_dir(flags.out + ".x");
  const double t_r = stack.scene.acq.repetition_period;
  double alpha_hi = 0.0;
  for (double a : stack.scene.reflectivity) alpha_hi = std::max(alpha_hi, a);
  if (alpha_hi <= 0.0) alpha_hi = 1.0;

  const std::string depth_path = flags.out + "_depth.pgm";
  const std::string refl_path = flags.out + "_reflectivity.pgm";
  const std::string metrics_path = flags.out + "_metrics.txt";
  splidar::write_pgm(depth_path, splidar::quantize_pgm16(rec.delay, rec.width,
                                                         rec.height, 0.0, t_r));
  splidar::write_pgm(refl_path,
                     splidar::quantize_pgm16(rec.reflectivity, rec.width,
                                             rec.height, 0.0, alpha_hi));
  {
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw splidar::IoError("cannot write " + metrics_path);
    metrics << "depth_rmse_normalized = "
            << splidar::csv_number(rec.metrics.depth_rmse) << "\n"
            << "reflectivity_rmse = "
            << splidar::csv_number(rec.metrics.reflectivity_rmse) << "\n"
            << "reflectivity_psnr_db = "
            << splidar::csv_number(rec.metrics.reflectivity_psnr) << "\n"
            << "invalid_pixels = " << rec.metrics.invalid_pixels << "\n"
            << "solver_failures = " << rec.metrics.solver_failures << "\n";
  }

  splidar::RunManifest manifest;
  manifest.command = "reconstruct";
  manifest.seed = resolve_seed(flags, stack.seed);
  manifest.add_config("stack_file", stack_path);
  manifest.add_config("window", std::to_string(window));
  manifest.add_config("mode", mode_name);
  manifest.add_config_double("alpha_cap", alpha_cap);
  manifest.add_config_double("depth_scale_max", t_r);
  manifest.add_config_double("reflectivity_scale_max", alpha_hi);
  manifest.outputs = {depth_path, refl_path, metrics_path};
  splidar::write_manifest(flags.out + ".manifest", manifest);

  std::cout << "wrote " << depth_path << ", " << refl_path << ", "
            << metrics_path << "\n";
  return kExitOk;
}

int cmd_verify(const GlobalFlags& flags) {
  splidar::VerificationOptions opt;
  opt.seed = resolve_seed(flags, splidar::kDefaultVerifySeed);
  opt.threads = flags.threads;
  opt.out_dir = flags.out;
  if (!opt.out_dir.empty())
    std::filesystem::create_directories(opt.out_dir);

  const splidar::VerificationReport report = splidar::run_verification(opt);
  for (const splidar::CriterionResult& c : report.criteria)
    std::cout << (c.passed ? "PASS" : "FAIL") << " " << c.name << ": "
              << c.detail << "\n";
  if (!report.all_passed()) {
    std::cerr << "verification failed\n";
    return kExitVerify;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-photon LiDAR estimation toolkit"};
  app.set_version_flag("--version", splidar::kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  app.add_option("--threads", flags.threads, "worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed_value,
                                  "seed overriding any file-provided seed");

  // sim
  auto* sim = app.add_subcommand("sim", "simulate a first-photon frame stack");
  std::string sim_scene;
  int sim_frames = 10, sim_width = 32, sim_height = 32;
  std::string sim_reflectance, sim_depth;
  double sim_zmin = 2.0, sim_zmax = 60.0, sim_jitter = 0.0;
  std::string sim_mode = "mixture";
  sim->add_option("scene", sim_scene, "scene preset file")->required();
  sim->add_option("--frames", sim_frames, "frames to simulate")
      ->check(CLI::PositiveNumber);
  sim->add_option("--width", sim_width)->check(CLI::PositiveNumber);
  sim->add_option("--height", sim_height)->check(CLI::PositiveNumber);
  sim->add_option("--reflectance-pgm", sim_reflectance,
                  "PGM mapped to reflectance in [0,1] and scaled by alpha");
  sim->add_option("--depth-pgm", sim_depth,
                  "PGM mapped to depth in [z-min, z-max] meters");
  sim->add_option("--z-min", sim_zmin);
  sim->add_option("--z-max", sim_zmax);
  sim->add_option("--jitter", sim_jitter, "timing jitter sigma, seconds");
  sim->add_option("--mode", sim_mode, "mixture | order_statistic");
  sim->add_option("--out", flags.out, "output stack path")->required();

  // sweep / scatter
  auto* sweep = app.add_subcommand("sweep", "MSE-vs-SBR Monte Carlo sweep");
  std::string sweep_spec;
  sweep->add_option("spec", sweep_spec, "sweep spec file")->required();
  sweep->add_option("--out", flags.out, "output CSV path")->required();

  auto* scatter =
      app.add_subcommand("scatter", "per-trial estimate scatter export");
  std::string scatter_spec;
  scatter->add_option("spec", scatter_spec, "sweep spec file")->required();
  scatter->add_option("--out", flags.out, "output CSV path")->required();

  // crlb
  auto* crlb = app.add_subcommand("crlb", "bound comparison over an SBR grid");
  std::string crlb_grid;
  crlb->add_option("grid", crlb_grid, "grid config file")->required();
  crlb->add_option("--out", flags.out, "output CSV path")->required();

  // reconstruct
  auto* reconstruct =
      app.add_subcommand("reconstruct", "per-pixel maps from a frame stack");
  std::string rec_stack, rec_mode = "joint";
  int rec_window = 1;
  double rec_alpha_cap = 10.0;
  reconstruct->add_option("stack", rec_stack, "frame stack file")->required();
  reconstruct->add_option("--window", rec_window, "frames to pool")
      ->check(CLI::PositiveNumber);
  reconstruct->add_option("--mode", rec_mode, "baseline | joint");
  reconstruct->add_option("--alpha-cap", rec_alpha_cap,
                          "reflectivity upper bound for the mixture solver");
  reconstruct->add_option("--out", flags.out, "output prefix")->required();

  // verify
  auto* verify =
      app.add_subcommand("verify", "run the numerical verification suite");
  verify->add_option("--out", flags.out,
                     "directory for CSVs, report and manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) flags.seed = seed_value;

  try {
    if (sim->parsed())
      return cmd_sim(flags, sim_scene, sim_frames, sim_width, sim_height,
                     sim_reflectance, sim_depth, sim_zmin, sim_zmax,
                     sim_jitter, sim_mode);
    if (sweep->parsed()) return cmd_sweep(flags, sweep_spec);
    if (scatter->parsed()) return cmd_scatter(flags, scatter_spec);
    if (crlb->parsed()) return cmd_crlb(flags, crlb_grid);
    if (reconstruct->parsed())
      return cmd_reconstruct(flags, rec_stack, rec_window, rec_mode,
                             rec_alpha_cap);
    if (verify->parsed()) return cmd_verify(flags);
  } catch (const splidar::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const splidar::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerify;
  }
  return kExitConfig;
}
