// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_CONFIG_HPP
#define FMCSUB_CONFIG_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fmcsub/binio.hpp"
#include "fmcsub/core.hpp"

namespace fmcsub {

/// Flat `key = value` configuration.
///
/// Lines starting with `#` are comments. `include = other.cfg` splices another
/// file (relative to the including file) at that position. Later assignments
/// override earlier ones.
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, const std::filesystem::path& base_dir = {}) {
    Config cfg;
    cfg.parse_into(text, base_dir, 0);
    return cfg;
  }

  static Config load(const std::filesystem::path& path) {
    Config cfg;
    cfg.load_into(path, 0);
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  template <class T>
  void set_number(const std::string& key, T value) {
    std::ostringstream ss;
    ss.precision(17);
    ss << value;
    values_[key] = ss.str();
  }

  /// Overlays every key of `other` onto this config.
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double number(const std::string& key) const { return to_double(key, str(key)); }

  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t count(const std::string& key) const { return to_u64(key, str(key)); }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + v);
  }

  /// Whitespace-separated list of numbers.
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::istringstream ss(str(key));
    std::string tok;
    while (ss >> tok) out.push_back(to_double(key, tok));
    return out;
  }

  std::vector<std::uint64_t> counts(const std::string& key) const {
    std::vector<std::uint64_t> out;
    std::istringstream ss(str(key));
    std::string tok;
    while (ss >> tok) out.push_back(to_u64(key, tok));
    return out;
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

  /// Canonical text form: sorted keys, one per line.
  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static constexpr int kMaxIncludeDepth = 16;

  void load_into(const std::filesystem::path& path, int depth) {
    std::string text;
    try {
      text = binio::read_file(path);
    } catch (const IoError&) {
      throw IoError("cannot open config " + path.string());
    }
    parse_into(text, path.parent_path(), depth);
  }

  void parse_into(std::string_view text, const std::filesystem::path& base_dir, int depth) {
    if (depth > kMaxIncludeDepth) throw ConfigError("config include nesting too deep");
    std::size_t line_no = 0;
    while (!text.empty()) {
      auto nl = text.find('\n');
      auto line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      line = trim(line);
      if (line.empty() || line.front() == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      auto key = std::string(trim(line.substr(0, eq)));
      auto value = std::string(trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      if (key == "include") {
        load_into(base_dir / value, depth + 1);
      } else {
        values_[key] = value;
      }
    }
  }

  static std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  }

  static double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ConfigError("config key '" + key + "' is not a number: " + v);
    }
    return out;
  }

  static std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ConfigError("config key '" + key + "' is not a non-negative integer: " + v);
    }
    return out;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace fmcsub

#endif  // FMCSUB_CONFIG_HPP
