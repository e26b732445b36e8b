#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "splidar/config.hpp"
#include "splidar/version.hpp"

namespace splidar {

/// FNV-1a 64-bit digest; used for output integrity records in manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const unsigned char* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string file_digest(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  char out[24];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return out;
}

/// Record of one command invocation: the resolved configuration, the seed,
/// and digests of every output file. Contains nothing run-dependent beyond
/// those, so identical invocations write byte-identical manifests.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;  ///< resolved keys
  std::vector<std::string> outputs;  ///< paths; digested at write time

  void add_config(const std::string& key, const std::string& value) {
    config.emplace_back(key, value);
  }

  void add_config_double(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    config.emplace_back(key, buf);
  }
};

/// Writes the manifest next to the outputs it describes. Keys are sorted so
/// the byte stream is a pure function of the content.
inline void write_manifest(const std::string& path, const RunManifest& m) {
  std::vector<std::pair<std::string, std::string>> lines;
  lines.emplace_back("command", m.command);
  lines.emplace_back("digest_algo", "fnv1a64");
  lines.emplace_back("seed", std::to_string(m.seed));
  lines.emplace_back("version", kVersion);
  for (const auto& [k, v] : m.config) lines.emplace_back("config." + k, v);
  for (const std::string& out : m.outputs) {
    // Record the basename; manifests should not pin absolute paths.
    const auto slash = out.find_last_of('/');
    const std::string name =
        slash == std::string::npos ? out : out.substr(slash + 1);
    lines.emplace_back("output." + name, file_digest(out));
  }
  std::sort(lines.begin(), lines.end());

  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write manifest: " + path);
  for (const auto& [k, v] : lines) file << k << " = " << v << "\n";
  if (!file) throw IoError("manifest write failed: " + path);
}

}  // namespace splidar
