// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/longform.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "longfnt/ops.hpp"

namespace lfnt {

const char* to_string(Provenance p) { return p == Provenance::kReference ? "gt" : "hyp"; }

SessionHistory::SessionHistory(std::string session_id, std::size_t window, Provenance provenance)
    : session_id_(std::move(session_id)), window_(window), provenance_(provenance) {}

void SessionHistory::push(std::size_t utt_index, Provenance provenance, HistoryUtterance utterance) {
  if (any_ && utt_index <= last_index_) {
    throw ShapeError("session_history", "utterance " + std::to_string(utt_index) + " after " +
                                            std::to_string(last_index_) + " in session " + session_id_);
  }
  if (provenance != provenance_) {
    throw ShapeError("session_history", "mixed gt/hyp provenance in session " + session_id_);
  }
  any_ = true;
  last_index_ = utt_index;
  entries_.push_back(Entry{utt_index, provenance, std::move(utterance)});
  while (entries_.size() > window_) entries_.pop_front();
}

std::vector<HistoryUtterance> SessionHistory::view() const {
  std::vector<HistoryUtterance> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.utterance);
  return out;
}

// -- LFCE files ---------------------------------------------------------------------

void write_context_table(const std::filesystem::path& path, const ContextTable& table) {
  if (table.data.size() != table.rows * table.dim) throw FormatError("context table size mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  const std::uint16_t version = 1;
  const auto rows = static_cast<std::uint32_t>(table.rows), dim = static_cast<std::uint32_t>(table.dim);
  out.write("LFCE", 4);
  out.write(reinterpret_cast<const char*>(&version), 2);
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(table.data.data()),
            static_cast<std::streamsize>(table.data.size() * sizeof(float)));
  if (!out) throw FormatError("write failed: " + path.string());
}

ContextTable read_context_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 14;
  if (bytes.size() < header) throw FormatError(path.string() + ": truncated header");
  if (std::memcmp(bytes.data(), "LFCE", 4) != 0) throw FormatError(path.string() + ": bad magic, expected LFCE");
  std::uint16_t version;
  std::uint32_t rows, dim;
  std::memcpy(&version, bytes.data() + 4, 2);
  std::memcpy(&rows, bytes.data() + 6, 4);
  std::memcpy(&dim, bytes.data() + 10, 4);
  if (version != 1) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const std::size_t expected = header + std::size_t{rows} * dim * 4;
  if (bytes.size() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, got " +
                      std::to_string(bytes.size()));
  }
  ContextTable t{rows, dim, std::vector<float>(std::size_t{rows} * dim)};
  std::memcpy(t.data.data(), bytes.data() + header, t.data.size() * 4);
  return t;
}

// -- context encoder ------------------------------------------------------------------

std::vector<std::int64_t> join_history(const std::vector<HistoryUtterance>& history,
                                       std::size_t text_window, std::int64_t separator) {
  std::vector<std::int64_t> ids;
  const std::size_t first = history.size() > text_window ? history.size() - text_window : 0;
  for (std::size_t i = first; i < history.size(); ++i) {
    if (!ids.empty()) ids.push_back(separator);
    ids.insert(ids.end(), history[i].tokens.begin(), history[i].tokens.end());
  }
  return ids;
}

ContextEncoder::ContextEncoder(std::size_t vocab_size, const BlockConfig& block, std::size_t layers,
                               ParamInit& init)
    : vocab_size_(vocab_size), embedding_(init.normal({vocab_size + 3, block.model_dim}, 1.0)) {
  for (std::size_t l = 0; l < layers; ++l) layers_.emplace_back(block, 0, init);
}

ContextEncoder::ContextEncoder(std::size_t vocab_size, std::shared_ptr<const ContextTable> table)
    : vocab_size_(vocab_size), table_(std::move(table)) {
  if (!table_ || table_->rows < vocab_size + 3) {
    throw ShapeError("context_encoder", "frozen table needs at least " + std::to_string(vocab_size + 3) +
                                            " rows (tokens, separator, no-history)");
  }
}

std::size_t ContextEncoder::dim() const { return table_ ? table_->dim : embedding_.cols(); }

Tensor ContextEncoder::operator()(const std::vector<std::int64_t>& ids, DropoutRng rng) const {
  const bool empty = ids.empty();
  const std::vector<std::int64_t> lookup = empty ? std::vector<std::int64_t>{no_history()} : ids;
  if (table_) {
    std::set<std::int64_t> missing;
    for (auto id : lookup) {
      if (id < 0 || static_cast<std::size_t>(id) >= table_->rows) missing.insert(id);
    }
    if (!missing.empty()) {
      std::string list;
      for (auto id : missing) list += (list.empty() ? "" : ",") + std::to_string(id);
      throw ShapeError("context_encode", "frozen table has no rows for ids " + list);
    }
    std::vector<double> v;
    v.reserve(lookup.size() * table_->dim);
    for (auto id : lookup) {
      const float* r = table_->row(static_cast<std::size_t>(id));
      v.insert(v.end(), r, r + table_->dim);
    }
    return Tensor::from_values({lookup.size(), table_->dim}, v);
  }
  for (auto id : lookup) {
    if (id <= 0 || static_cast<std::size_t>(id) > vocab_size_ + 2) {
      throw ShapeError("context_encode", "history id " + std::to_string(id) + " out of range");
    }
  }
  Tensor c = embedding(embedding_, lookup);
  if (empty) return c;
  c = add_positional_encoding(c, 0);
  const auto mask = AttentionMask::full(c.rows(), c.rows());
  for (const auto& layer : layers_) c = layer(c, mask, nullptr, rng);
  return c;
}

void ContextEncoder::visit(const std::string& prefix, const ParamVisitor& fn) {
  if (table_) return;
  fn(prefix + ".embedding", embedding_);
  for (std::size_t l = 0; l < layers_.size(); ++l) layers_[l].visit(prefix + ".layer" + std::to_string(l), fn);
}

}  // namespace lfnt
