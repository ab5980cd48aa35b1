// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "longfnt/features.hpp"
#include "longfnt/lattice.hpp"

namespace lfnt {

/// Generator parameters. Token ids 1..V are laid out as
///   [common (its last 2*homophone_pairs ids paired) | confusable pairs | accent pairs],
/// with the two members of each pair adjacent.
struct CorpusSpec {
  std::uint64_t seed = 0;
  std::size_t vocab_size = 24;
  std::size_t sessions = 1300;
  std::size_t first_session = 0;  // index of the first generated session; offsets ids and per-session streams
  std::size_t train_sessions = 800;
  std::size_t dev_sessions = 200;  // the remainder is the test split
  std::size_t utterances_per_session = 5;
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 8;
  std::size_t min_frames_per_token = 3;
  std::size_t max_frames_per_token = 5;
  std::size_t feature_dim = 16;
  double noise = 0.35;
  std::size_t topics = 4;
  double topic_sharpness = 2.0;  // scale of the per-topic bigram logits
  std::size_t homophone_pairs = 2;  // common-token pairs sharing a prototype
  bool session_topic = true;     // false: topic drawn per utterance
  double entity_rate = 0.25;
  std::size_t confusable_pairs = 3;
  std::size_t max_session_entities = 2;
  std::size_t accent_pairs = 2;
  double accent_rate = 0.15;
  double accent_reveal = 0.35;  // probability an utterance carries the accent cue
  double accent_amplitude = 1.0;

  void validate() const;
  std::size_t common_tokens() const { return vocab_size - 2 * confusable_pairs - 2 * accent_pairs; }
  /// First id of the confusable range; pairs are (first + 2i, first + 2i + 1).
  std::int64_t confusable_begin() const { return static_cast<std::int64_t>(common_tokens()) + 1; }
  std::int64_t accent_begin() const { return confusable_begin() + static_cast<std::int64_t>(2 * confusable_pairs); }
  std::int64_t homophone_begin() const { return confusable_begin() - static_cast<std::int64_t>(2 * homophone_pairs); }
  bool is_homophone(std::int64_t token) const;
  bool is_confusable(std::int64_t token) const;
  bool is_accent(std::int64_t token) const;

  /// Default spec with every history mechanism removed.
  static CorpusSpec control(const CorpusSpec& base);
};

std::map<std::string, std::string> corpus_spec_entries(const CorpusSpec& spec);
/// Applies "corpus.*" keys; returns unknown "corpus.*" keys.
std::vector<std::string> apply_corpus_spec(const std::map<std::string, std::string>& entries, CorpusSpec& spec);

enum class Split : std::uint8_t { kTrain, kDev, kTest };
const char* to_string(Split s);

struct CorpusUtterance {
  std::size_t utt_index = 0;
  std::size_t topic = 0;
  bool reveals_accent = false;
  LabelSequence tokens;
  FeatureMatrix features;
};

struct CorpusSession {
  std::string id;
  Split split = Split::kTrain;
  std::size_t topic = 0;
  int accent = 1;  // +1 / -1
  std::vector<std::int64_t> entities;  // active confusable member per chosen pair
  std::vector<CorpusUtterance> utterances;
};

/// Fixed generator tables derived from the spec seed.
struct CorpusModel {
  CorpusSpec spec;
  std::vector<std::vector<float>> prototypes;  // per token id (index 0 unused), D-2 dims
  // bigram[topic][prev][next] over common tokens; prev == common_tokens() is the start row.
  std::vector<std::vector<std::vector<double>>> bigram;

  explicit CorpusModel(const CorpusSpec& spec);
  /// Acoustic prototype of `token` under `accent`; accent pairs swap under -1.
  const std::vector<float>& prototype(std::int64_t token, int accent) const;
  /// Generator distribution of the next token (index 0 unused) given the
  /// utterance topic, the session's active confusable members and the
  /// previous token (0 at the start).
  std::vector<double> next_token(std::size_t topic, const std::vector<std::int64_t>& entities,
                                 std::int64_t prev) const;
};

struct Corpus {
  CorpusModel model;
  std::vector<CorpusSession> sessions;
};

Corpus generate_corpus(const CorpusSpec& spec);

/// Text rendering of a token sequence ("w3 w17 ...").
std::string tokens_to_text(const LabelSequence& tokens);

/// One manifest line.
struct ManifestRecord {
  std::string session_id;
  std::size_t utt_index = 0;
  std::string feature_file;  // relative to the manifest directory; empty for text-only
  LabelSequence tokens;
  std::string text;
};

/// Writes <out>/{train,dev,test}.jsonl, <out>/feats/*.lfnt and <out>/corpus.conf.
void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir);
/// Writes a text-only manifest (no feature files) with every utterance.
void write_text_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

/// A session loaded from a manifest, utterances in utt_index order.
struct ManifestSession {
  std::string id;
  std::vector<ManifestRecord> records;
  std::vector<std::shared_ptr<const FeatureMatrix>> features;  // null for text-only
};

/// Groups records by session (first-appearance order) and loads features
/// relative to `base_dir`. Throws if a session's indices are not 0,1,2,...
std::vector<ManifestSession> load_sessions(const std::vector<ManifestRecord>& records,
                                           const std::filesystem::path& base_dir, bool load_features = true);

/// In-memory view of one split, shaped as if read back from its manifest.
std::vector<ManifestSession> split_sessions(const Corpus& corpus, Split split);

/// Generator-aware reference numbers quantifying how much history helps.
struct OracleReport {
  std::size_t confusable_tokens = 0;
  double confusable_error_blind = 0.0;    // history-blind oracle
  double confusable_error_history = 0.0;  // sees the previous two transcripts
  std::size_t accent_utterances = 0;
  double accent_accuracy_current = 0.0;  // accent sign from the current features
  double accent_accuracy_history = 0.0;  // plus the previous two utterances
  double entropy_no_history = 0.0;       // nats/token, exact generator predictive
  double entropy_history = 0.0;          // same, conditioned on two previous transcripts
};

/// Evaluates the oracles on the sessions of `split`.
OracleReport corpus_oracles(const Corpus& corpus, Split split, std::size_t history = 2);

}  // namespace lfnt
