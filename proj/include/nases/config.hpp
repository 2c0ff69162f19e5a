#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "nases/error.hpp"

namespace nases {

// Flat TOML-style config: [section] headers, key = value lines, '#' comments.
// Values may be quoted; keys are addressed as "section.key".
class ConfigMap {
 public:
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::Config, "missing config key: " + key);
    return it->second;
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "config key " + key + " is not a number: " + it->second);
    }
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "config key " + key + " is not an integer: " + it->second);
    }
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail(ErrorKind::Config, "config key " + key + " is not a boolean: " + it->second);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& all() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // strip comments outside quotes
    bool quoted = false;
    std::string clean;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      clean.push_back(ch);
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    clean = trim(clean);
    if (clean.empty()) continue;
    if (clean.front() == '[') {
      if (clean.back() != ']')
        fail(ErrorKind::Config, "malformed section header at line " + std::to_string(lineno));
      section = trim(clean.substr(1, clean.size() - 2));
      continue;
    }
    const auto eq = clean.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "expected key = value at line " + std::to_string(lineno));
    std::string key = trim(clean.substr(0, eq));
    std::string value = trim(clean.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty()) fail(ErrorKind::Config, "empty key at line " + std::to_string(lineno));
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

inline ConfigMap load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace nases
