#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "splidar/config.hpp"
#include "splidar/pgm.hpp"
#include "splidar/scene_io.hpp"
#include "splidar/simulator.hpp"

namespace splidar {

// Binary frame-stack format (little-endian):
//   magic "SPLF" | u32 version | u32 width | u32 height | u32 n_frames
//   | f64 t_r | width*height*n_frames f64 timestamps (frame-major,
//   row-major within a frame), NaN marking no detection.
inline constexpr std::uint32_t kFrameStackVersion = 1;
inline constexpr std::size_t kFrameStackHeaderBytes = 4 + 4 + 4 + 4 + 4 + 8;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw IoError("frame stack: truncated header");
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i)
    bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8))
    throw IoError("frame stack: truncated data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

/// Ground-truth provenance recorded in the sidecar so reconstruction can
/// rebuild the scene for metrics.
struct FrameStackSidecar {
  std::uint64_t seed = 0;
  FirstPhotonOptions options;
  /// `flat` scenes carry the resolved scalars; `pgm` scenes reference the
  /// source images plus their value mappings.
  std::string grid_kind = "flat";
  std::vector<std::pair<std::string, std::string>> scene_entries;
};

inline void write_framestack(const std::string& path, const FrameStack& stack,
                             const FrameStackSidecar& sidecar) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write frame stack: " + path);
  out.write("SPLF", 4);
  detail::put_u32(out, kFrameStackVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(stack.width));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.height));
  detail::put_u32(out, static_cast<std::uint32_t>(stack.n_frames));
  detail::put_f64(out, stack.scene.acq.repetition_period);
  for (double t : stack.timestamps) detail::put_f64(out, t);
  if (!out) throw IoError("frame stack write failed: " + path);

  std::ofstream meta(path + ".meta", std::ios::binary);
  if (!meta) throw IoError("cannot write sidecar: " + path + ".meta");
  meta << "seed = " << sidecar.seed << "\n";
  meta << "grid = " << sidecar.grid_kind << "\n";
  meta << "n_frames = " << stack.n_frames << "\n";
  meta << "width = " << stack.width << "\n";
  meta << "height = " << stack.height << "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", sidecar.options.jitter_sigma);
  meta << "jitter_sigma = " << buf << "\n";
  meta << "first_photon_mode = "
       << (sidecar.options.mode == FirstPhotonMode::kMixture ? "mixture"
                                                             : "order_statistic")
       << "\n";
  for (const auto& [k, v] : sidecar.scene_entries)
    meta << k << " = " << v << "\n";
  if (!meta) throw IoError("sidecar write failed: " + path + ".meta");
}

/// Timestamp payload of a stack file, without scene ground truth.
struct FrameStackData {
  int width = 0;
  int height = 0;
  int n_frames = 0;
  double repetition_period = 0.0;
  std::vector<double> timestamps;
};

inline FrameStackData read_framestack(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open frame stack: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SPLF", 4) != 0)
    throw ConfigError("frame stack: bad magic in " + path);
  const std::uint32_t version = detail::get_u32(in);
  if (version != kFrameStackVersion)
    throw ConfigError("frame stack: unsupported version " +
                      std::to_string(version) + " in " + path);

  FrameStackData data;
  data.width = static_cast<int>(detail::get_u32(in));
  data.height = static_cast<int>(detail::get_u32(in));
  data.n_frames = static_cast<int>(detail::get_u32(in));
  data.repetition_period = detail::get_f64(in);
  if (data.width <= 0 || data.height <= 0 || data.n_frames <= 0 ||
      !(data.repetition_period > 0.0))
    throw ConfigError("frame stack: bad header fields in " + path);
  const std::size_t n = static_cast<std::size_t>(data.width) * data.height *
                        data.n_frames;
  data.timestamps.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    data.timestamps.push_back(detail::get_f64(in));
  return data;
}

/// Rebuilds the scene grid a stack was generated from, using its sidecar.
/// PGM-backed scenes re-read the referenced images.
inline FrameStack load_framestack_with_scene(const std::string& path) {
  const FrameStackData data = read_framestack(path);
  const KeyValueFile meta = KeyValueFile::load(path + ".meta");

  FrameStack stack;
  stack.width = data.width;
  stack.height = data.height;
  stack.n_frames = data.n_frames;
  stack.timestamps = data.timestamps;
  stack.seed = meta.get_u64("seed");
  stack.options.jitter_sigma = meta.get_double("jitter_sigma", 0.0);
  stack.options.mode = meta.get_string("first_photon_mode", "mixture") ==
                               "order_statistic"
                           ? FirstPhotonMode::kOrderStatistic
                           : FirstPhotonMode::kMixture;

  AcquisitionConfig acq;
  acq.repetition_period = meta.get_double("t_r");
  acq.repetitions = meta.get_long("n_r");
  acq.quantum_efficiency = meta.get_double("eta");
  const double sigma_t = meta.get_double("sigma_t");
  const double alpha = meta.get_double("alpha");
  const double b_lambda = meta.get_double("b_lambda");
  const double pulse_energy = meta.get_double("pulse_energy");

  const std::string kind = meta.get_string("grid");
  if (kind == "flat") {
    PixelScene scene;
    scene.reflectivity = alpha;
    scene.delay = meta.get_double("tau");
    scene.background_rate = b_lambda;
    scene.pulse = PulseShape{pulse_energy, sigma_t};
    scene.acq = acq;
    stack.scene = uniform_grid(scene, data.width, data.height);
  } else if (kind == "pgm") {
    SceneGrid grid;
    grid.width = data.width;
    grid.height = data.height;
    grid.pulse = PulseShape{pulse_energy, sigma_t};
    grid.acq = acq;
    const PgmImage gamma_img = read_pgm(meta.get_string("reflectance_pgm"));
    if (gamma_img.width != data.width || gamma_img.height != data.height)
      throw ConfigError("frame stack: reflectance map size mismatch");
    const std::vector<double> gamma = gamma_img.mapped(0.0, 1.0);
    grid.reflectivity.resize(gamma.size());
    for (std::size_t i = 0; i < gamma.size(); ++i)
      grid.reflectivity[i] = alpha * gamma[i];
    if (meta.has("depth_pgm")) {
      const PgmImage depth_img = read_pgm(meta.get_string("depth_pgm"));
      if (depth_img.width != data.width || depth_img.height != data.height)
        throw ConfigError("frame stack: depth map size mismatch");
      const std::vector<double> z =
          depth_img.mapped(meta.get_double("z_min"), meta.get_double("z_max"));
      grid.delay.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        grid.delay[i] = 2.0 * z[i] / kSpeedOfLight;
    } else {
      grid.delay.assign(gamma.size(), meta.get_double("tau"));
    }
    grid.background_rate.assign(gamma.size(), b_lambda);
    validate(grid);
    stack.scene = grid;
  } else {
    throw ConfigError("frame stack: unknown grid kind `" + kind + "`");
  }
  return stack;
}

}  // namespace splidar
