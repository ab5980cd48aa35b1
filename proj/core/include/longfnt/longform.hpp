// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "longfnt/features.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/nn.hpp"
#include "longfnt/tensor.hpp"

namespace lfnt {

/// Where history transcriptions came from.
enum class Provenance : std::uint8_t { kReference, kHypothesis };
/// "gt" / "hyp".
const char* to_string(Provenance p);

/// One previous utterance as seen by the model.
struct HistoryUtterance {
  LabelSequence tokens;
  std::shared_ptr<const FeatureMatrix> features;  // may be null for text-only use
};

/// Rolling window of previous utterances of one session, oldest first.
class SessionHistory {
 public:
  struct Entry {
    std::size_t utt_index = 0;
    Provenance provenance = Provenance::kReference;
    HistoryUtterance utterance;
  };

  SessionHistory(std::string session_id, std::size_t window, Provenance provenance);

  const std::string& session_id() const { return session_id_; }
  std::size_t window() const { return window_; }
  Provenance provenance() const { return provenance_; }
  std::size_t size() const { return entries_.size(); }
  const std::deque<Entry>& entries() const { return entries_; }

  /// Appends utterance `utt_index`; indices must increase strictly and the
  /// provenance must match the run. Evicts beyond the window.
  void push(std::size_t utt_index, Provenance provenance, HistoryUtterance utterance);

  /// The last min(window, size) utterances, oldest first.
  std::vector<HistoryUtterance> view() const;

 private:
  std::string session_id_;
  std::size_t window_;
  Provenance provenance_;
  std::deque<Entry> entries_;
  bool any_ = false;
  std::size_t last_index_ = 0;
};

/// Read-only per-token embedding table ("LFCE" file). Row ids: 1..V tokens,
/// V+1 separator, V+2 no-history.
struct ContextTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  const float* row(std::size_t id) const { return data.data() + id * dim; }
  bool operator==(const ContextTable&) const = default;
};

/// "LFCE" | u16 version=1 | u32 rows | u32 d_ctx | rows*d_ctx little-endian f32.
void write_context_table(const std::filesystem::path& path, const ContextTable& table);
ContextTable read_context_table(const std::filesystem::path& path);

/// Tokens of the history window joined by one separator id.
std::vector<std::int64_t> join_history(const std::vector<HistoryUtterance>& history,
                                       std::size_t text_window, std::int64_t separator);

/// Per-token embeddings C of the previous transcriptions. Joint mode owns a
/// bidirectional transformer; frozen mode reads rows from a ContextTable.
class ContextEncoder {
 public:
  ContextEncoder() = default;
  /// Joint mode.
  ContextEncoder(std::size_t vocab_size, const BlockConfig& block, std::size_t layers, ParamInit& init);
  /// Frozen-external mode; the table must have at least V+3 rows.
  ContextEncoder(std::size_t vocab_size, std::shared_ptr<const ContextTable> table);

  bool frozen() const { return table_ != nullptr; }
  std::size_t dim() const;
  std::int64_t separator() const { return static_cast<std::int64_t>(vocab_size_ + 1); }
  std::int64_t no_history() const { return static_cast<std::int64_t>(vocab_size_ + 2); }

  /// `ids` as produced by join_history; empty gives the no-history row.
  Tensor operator()(const std::vector<std::int64_t>& ids, DropoutRng rng = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);

 private:
  std::size_t vocab_size_ = 0;
  Tensor embedding_;  // [(V+3) x d]
  std::vector<TransformerLayer> layers_;
  std::shared_ptr<const ContextTable> table_;
};

}  // namespace lfnt
