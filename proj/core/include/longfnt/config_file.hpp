// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfnt {

/// Invalid configuration text or value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat dotted keys ("model.dim") to raw string values.
using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines. '#' starts a comment; blank lines are
/// ignored; a key may appear once.
ConfigMap parse_config(const std::string& text, const std::string& source = "<config>");
ConfigMap read_config_file(const std::filesystem::path& path);
std::string format_config(const ConfigMap& entries);
void write_config_file(const std::filesystem::path& path, const ConfigMap& entries);

/// Parses "key=value" overrides (e.g. repeated --set flags) on top of `base`.
void apply_overrides(ConfigMap& base, const std::vector<std::string>& overrides);

/// Throws ConfigError naming every key that no consumer recognised.
void reject_unknown(const std::vector<std::string>& unknown);

}  // namespace lfnt
