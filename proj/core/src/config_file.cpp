// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/config_file.hpp"

#include <fstream>
#include <sstream>

namespace lfnt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config(const std::string& text, const std::string& source) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value, got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void write_config_file(const std::filesystem::path& path, const ConfigMap& entries) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << format_config(entries);
}

std::string format_config(const ConfigMap& entries) {
  std::string out;
  for (const auto& [k, v] : entries) out += k + " = " + v + "\n";
  return out;
}

void apply_overrides(ConfigMap& base, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || trim(o.substr(0, eq)).empty()) {
      throw ConfigError("override '" + o + "' is not key=value");
    }
    base[trim(o.substr(0, eq))] = trim(o.substr(eq + 1));
  }
}

void reject_unknown(const std::vector<std::string>& unknown) {
  if (unknown.empty()) return;
  std::string msg = "unknown config key";
  msg += unknown.size() > 1 ? "s: " : ": ";
  for (std::size_t i = 0; i < unknown.size(); ++i) msg += (i ? ", " : "") + unknown[i];
  throw ConfigError(msg);
}

}  // namespace lfnt
