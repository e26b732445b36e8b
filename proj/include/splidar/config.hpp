#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace splidar {

/// Raised on malformed or semantically invalid configuration input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on filesystem trouble (missing files, failed writes).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

/// Flat UTF-8 key-value configuration: one `key = value` per line,
/// `#` starts a comment, no sections or nesting.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>") {
    KeyValueFile kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) +
                          ": expected `key = value`");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      if (kv.index_.count(key))
        throw ConfigError(origin + ": duplicate key `" + key + "`");
      kv.index_[key] = kv.entries_.size();
      kv.entries_.emplace_back(key, value);
    }
    return kv;
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  bool has(const std::string& key) const { return index_.count(key) != 0; }

  const std::string& raw(const std::string& key) const {
    const auto it = index_.find(key);
    if (it == index_.end())
      throw ConfigError(origin_ + ": missing required key `" + key + "`");
    return entries_[it->second].second;
  }

  double get_double(const std::string& key) const {
    return parse_double(raw(key), key);
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long get_long(const std::string& key) const {
    const std::string& v = raw(key);
    try {
      std::size_t pos = 0;
      const long out = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key `" + key + "`: not an integer: " + v);
    }
  }

  long get_long(const std::string& key, long fallback) const {
    return has(key) ? get_long(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& v = raw(key);
    try {
      std::size_t pos = 0;
      const std::uint64_t out = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key `" + key + "`: not an unsigned integer: " + v);
    }
  }

  std::string get_string(const std::string& key) const { return raw(key); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = raw(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(origin_ + ": key `" + key + "`: expected true/false");
  }

  /// Comma-separated list of reals.
  std::vector<double> get_double_list(const std::string& key) const {
    const std::string& v = raw(key);
    std::vector<double> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      if (item.empty())
        throw ConfigError(origin_ + ": key `" + key + "`: empty list element");
      out.push_back(parse_double(item, key));
    }
    if (out.empty())
      throw ConfigError(origin_ + ": key `" + key + "`: empty list");
    return out;
  }

  /// Rejects any key that is not in `allowed`, naming the offender.
  void restrict_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : entries_) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ConfigError(origin_ + ": unknown key `" + key + "`");
    }
  }

  void require(const std::string& key) const { (void)raw(key); }

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  const std::string& origin() const { return origin_; }

 private:
  double parse_double(const std::string& v, const std::string& key) const {
    if (v == "inf") return std::numeric_limits<double>::infinity();
    try {
      std::size_t pos = 0;
      const double out = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return out;
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key `" + key + "`: not a number: " + v);
    }
  }

  std::string origin_ = "<empty>";
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace splidar
