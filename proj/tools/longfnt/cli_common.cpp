// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli_common.hpp"

#include "longfnt/tensor.hpp"

namespace lfnt::cli {

namespace {

bool has_prefix(const std::string& key, const char* prefix) { return key.rfind(prefix, 0) == 0; }

}  // namespace

ConfigMap decode_entries(const DecodeSettings& d) {
  return {
      {"decode.beam", std::to_string(d.options.beam)},
      {"decode.max_symbols_per_frame", std::to_string(d.options.max_symbols_per_frame)},
      {"decode.source", to_string(d.source)},
      {"decode.threads", std::to_string(d.threads)},
  };
}

Settings resolve(const CommonOptions& common, ConfigMap base) {
  if (!common.config_file.empty()) {
    for (auto& [k, v] : read_config_file(common.config_file)) base[k] = v;
  }
  apply_overrides(base, common.overrides);

  Settings s;
  s.entries = base;
  std::vector<std::string> unknown;
  auto collect = [&unknown](const std::vector<std::string>& keys) {
    unknown.insert(unknown.end(), keys.begin(), keys.end());
  };
  try {
    collect(apply_corpus_spec(base, s.corpus));
    ConfigMap model_keys;
    for (const auto& [k, v] : base) {
      if (has_prefix(k, "model.") || has_prefix(k, "longform.")) model_keys.emplace(k, v);
    }
    collect(apply_model_config(model_keys, s.model));
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  collect(apply_train_config(base, s.train));
  for (const auto& [k, v] : base) {
    if (has_prefix(k, "decode.")) {
      try {
        if (k == "decode.beam") s.decode.options.beam = std::stoul(v);
        else if (k == "decode.max_symbols_per_frame") s.decode.options.max_symbols_per_frame = std::stoul(v);
        else if (k == "decode.threads") s.decode.threads = std::stoul(v);
        else if (k == "decode.source") {
          if (v == "gt") s.decode.source = Provenance::kReference;
          else if (v == "hyp") s.decode.source = Provenance::kHypothesis;
          else throw ConfigError(k + ": expected gt|hyp, got '" + v + "'");
        } else {
          unknown.push_back(k);
        }
      } catch (const std::logic_error& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError(k + ": expected a non-negative integer, got '" + v + "'");
      }
    } else if (!has_prefix(k, "corpus.") && !has_prefix(k, "model.") && !has_prefix(k, "longform.") &&
               !has_prefix(k, "train.")) {
      unknown.push_back(k);
    }
  }
  reject_unknown(unknown);
  try {
    s.corpus.validate();
    s.model.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  s.train.adam.validate();
  return s;
}

MetricsLog::MetricsLog(const std::string& path) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  out_ = std::make_unique<std::ofstream>(path, std::ios::app);
  if (!*out_) throw ConfigError("cannot open metrics log " + path);
}

void MetricsLog::write(const nlohmann::json& record) {
  if (!out_) return;
  *out_ << record.dump() << '\n';
  out_->flush();
}

std::unique_ptr<FntModel> make_model(const ModelConfig& cfg, DType precision) {
  PrecisionScope scope(precision);
  return std::make_unique<FntModel>(cfg);
}

ConfigMap corpus_conf(const std::filesystem::path& dir) {
  const auto path = dir / "corpus.conf";
  if (!std::filesystem::exists(path)) return {};
  return read_config_file(path);
}

void inherit_corpus_shape(ConfigMap& entries, const ConfigMap& corpus) {
  for (const auto& [from, to] : {std::pair{"corpus.vocab_size", "model.vocab_size"},
                                 std::pair{"corpus.feature_dim", "model.feature_dim"}}) {
    auto it = corpus.find(from);
    if (it != corpus.end() && !entries.count(to)) entries[to] = it->second;
  }
}

void check_data(const std::vector<ManifestSession>& sessions, const ModelConfig& cfg, bool need_features) {
  if (sessions.empty()) throw ConfigError("no sessions in the selected data");
  for (const auto& s : sessions) {
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      const auto& r = s.records[i];
      for (auto t : r.tokens) {
        if (t < 1 || t > static_cast<std::int64_t>(cfg.vocab_size)) {
          throw ConfigError("token " + std::to_string(t) + " in " + s.id + "/" + std::to_string(i) +
                            " is outside the model vocabulary 1.." + std::to_string(cfg.vocab_size));
        }
      }
      if (need_features && s.features[i] && s.features[i]->dims != cfg.feature_dim) {
        throw ConfigError("features of " + s.id + "/" + std::to_string(i) + " have " +
                          std::to_string(s.features[i]->dims) + " dims, model expects " +
                          std::to_string(cfg.feature_dim));
      }
    }
  }
}

}  // namespace lfnt::cli
