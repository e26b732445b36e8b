#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "splidar/config.hpp"

namespace splidar {

/// A grayscale portable graymap: row-major samples in [0, maxval].
struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> samples;

  /// Samples linearly mapped to [lo, hi].
  std::vector<double> mapped(double lo, double hi) const {
    std::vector<double> out;
    out.reserve(samples.size());
    const double scale = (hi - lo) / static_cast<double>(maxval);
    for (std::uint16_t s : samples) out.push_back(lo + scale * s);
    return out;
  }
};

namespace detail {

inline int next_pgm_token(std::istream& in) {
  // Skips whitespace and `#` comments between header tokens.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw IoError("pgm: malformed header");
  return value;
}

}  // namespace detail

/// Reads an 8- or 16-bit PGM (binary P5 or ASCII P2).
inline PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open pgm file: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2")
    throw IoError("pgm: unsupported magic `" + magic + "` in " + path);

  PgmImage img;
  img.width = detail::next_pgm_token(in);
  img.height = detail::next_pgm_token(in);
  img.maxval = detail::next_pgm_token(in);
  if (img.width <= 0 || img.height <= 0)
    throw IoError("pgm: bad dimensions in " + path);
  if (img.maxval <= 0 || img.maxval > 65535)
    throw IoError("pgm: unsupported maxval in " + path);

  const std::size_t n =
      static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.samples.resize(n);
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      int v = 0;
      if (!(in >> v) || v < 0 || v > img.maxval)
        throw IoError("pgm: bad sample in " + path);
      img.samples[i] = static_cast<std::uint16_t>(v);
    }
    return img;
  }

  in.get();  // single whitespace after maxval
  if (img.maxval < 256) {
    std::vector<unsigned char> raw(n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size()))
      throw IoError("pgm: truncated data in " + path);
    for (std::size_t i = 0; i < n; ++i) img.samples[i] = raw[i];
  } else {
    // 16-bit samples are most-significant-byte first.
    std::vector<unsigned char> raw(2 * n);
    if (!in.read(reinterpret_cast<char*>(raw.data()), raw.size()))
      throw IoError("pgm: truncated data in " + path);
    for (std::size_t i = 0; i < n; ++i)
      img.samples[i] =
          static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return img;
}

/// Writes a binary (P5) PGM; 16-bit samples go most-significant-byte first.
inline void write_pgm(const std::string& path, const PgmImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write pgm file: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  if (img.maxval < 256) {
    for (std::uint16_t s : img.samples) {
      const unsigned char b = static_cast<unsigned char>(s & 0xff);
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  } else {
    for (std::uint16_t s : img.samples) {
      const unsigned char bytes[2] = {static_cast<unsigned char>(s >> 8),
                                      static_cast<unsigned char>(s & 0xff)};
      out.write(reinterpret_cast<const char*>(bytes), 2);
    }
  }
  if (!out) throw IoError("pgm: write failed: " + path);
}

/// Quantizes values to a 16-bit PGM by mapping [lo, hi] onto [0, 65535].
/// NaNs (invalid pixels) map to 0.
inline PgmImage quantize_pgm16(const std::vector<double>& values, int width,
                               int height, double lo, double hi) {
  PgmImage img;
  img.width = width;
  img.height = height;
  img.maxval = 65535;
  img.samples.reserve(values.size());
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) {
    if (std::isnan(v)) {
      img.samples.push_back(0);
      continue;
    }
    double unit = (v - lo) / span;
    unit = std::min(std::max(unit, 0.0), 1.0);
    img.samples.push_back(static_cast<std::uint16_t>(std::lround(unit * 65535.0)));
  }
  return img;
}

}  // namespace splidar
