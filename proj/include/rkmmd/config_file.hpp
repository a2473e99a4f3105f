#pragma once

#include "rkmmd/core.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

// Flat "key = value" configuration files.
//
//   # comment
//   batch_size = 32
//   lambda = 0.5, 0.25
//
// Keys are unique; blank lines and '#' comments are ignored.

namespace rkmmd {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source = "config") {
    KeyValueFile f;
    f.source_ = source;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      const std::string key = detail::trim(std::string_view(t).substr(0, eq));
      const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
      if (key.empty()) throw ParseError(source + ":" + std::to_string(lineno) + ": empty key");
      if (!f.values_.emplace(key, value).second) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      }
    }
    return f;
  }

  static KeyValueFile parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws on any key outside `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) throw ParseError(source_ + ": unknown key '" + k + "'");
    }
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_double(key, it->second);
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_int(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ParseError(source_ + ": key '" + key + "' expects true/false, got '" + it->second + "'");
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const auto& item : split(it->second)) out.push_back(to_double(key, item));
    return out;
  }

  std::vector<long long> get_int_list(const std::string& key, std::vector<long long> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<long long> out;
    for (const auto& item : split(it->second)) out.push_back(to_int(key, item));
    return out;
  }

 private:
  static std::vector<std::string> split(const std::string& v) {
    std::vector<std::string> items;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(detail::trim(item));
    if (items.empty()) items.emplace_back();
    return items;
  }

  double to_double(const std::string& key, const std::string& v) const {
    double out = 0.0;
    if (!parse_double(v, out) || !std::isfinite(out)) {
      throw ParseError(source_ + ": key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
  }

  long long to_int(const std::string& key, const std::string& v) const {
    double d = 0.0;
    if (!parse_double(v, d) || d != std::floor(d) || std::abs(d) > 9.0e15) {
      throw ParseError(source_ + ": key '" + key + "' expects an integer, got '" + v + "'");
    }
    return static_cast<long long>(d);
  }

  std::string source_;
  std::map<std::string, std::string> values_;
};

}  // namespace rkmmd
