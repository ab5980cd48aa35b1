// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "longfnt/config_file.hpp"
#include "longfnt/corpus.hpp"
#include "longfnt/decode.hpp"
#include "longfnt/model.hpp"
#include "longfnt/train.hpp"

namespace lfnt::cli {

/// Options shared by every subcommand.
struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;  // "key=value"
};

struct DecodeSettings {
  DecodeOptions options;
  Provenance source = Provenance::kReference;
  std::size_t threads = 1;
};

/// Fully resolved configuration; every key of the file has been consumed.
struct Settings {
  ConfigMap entries;
  CorpusSpec corpus;
  ModelConfig model;
  TrainConfig train;
  DecodeSettings decode;
};

/// Merges `base`, the config file and the overrides (later wins), parses
/// every section and rejects unknown keys.
Settings resolve(const CommonOptions& common, ConfigMap base = {});

ConfigMap decode_entries(const DecodeSettings& d);

/// One JSON object per line, opened for append.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::string& path);
  void write(const nlohmann::json& record);
  explicit operator bool() const { return out_ != nullptr; }

 private:
  std::unique_ptr<std::ofstream> out_;
};

/// Builds a model in the configured precision.
std::unique_ptr<FntModel> make_model(const ModelConfig& cfg, DType precision);

/// Reads <dir>/corpus.conf when present.
ConfigMap corpus_conf(const std::filesystem::path& dir);

/// Copies corpus.vocab_size / corpus.feature_dim into the model keys unless
/// the model keys are already set.
void inherit_corpus_shape(ConfigMap& entries, const ConfigMap& corpus);

/// Checks that token ids and feature widths fit the model.
void check_data(const std::vector<ManifestSession>& sessions, const ModelConfig& cfg, bool need_features);

}  // namespace lfnt::cli
