// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "longfnt/config_file.hpp"
#include "longfnt/model.hpp"
#include "longfnt/optimizer.hpp"

namespace lfnt {

struct ParamRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// "LFCK" | u16 version | config echo | named f32 parameters |
/// optional Adam state (f64 moments) | step | RNG state text.
struct Checkpoint {
  ConfigMap config;
  std::vector<ParamRecord> params;
  bool has_optimizer = false;
  AdamState optimizer;
  std::uint64_t step = 0;
  std::string rng_state;

  const ParamRecord* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source);
/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<ParamRecord> capture_parameters(FntModel& model);

/// Copies every model parameter whose name starts with `prefix` from the
/// checkpoint. Missing names and shape mismatches throw ShapeError.
/// Returns the number of tensors loaded.
std::size_t load_parameters(FntModel& model, const Checkpoint& ck, const std::string& prefix = "");

/// FNV-1a over parameter names and 32-bit values.
std::uint64_t parameter_checksum(FntModel& model);
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace lfnt
