// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "longfnt/corpus.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/longform.hpp"
#include "longfnt/model.hpp"

namespace lfnt {

struct DecodeOptions {
  std::size_t beam = 4;  // 0 selects greedy decoding
  std::size_t max_symbols_per_frame = 5;
};

struct DecodeHypothesis {
  LabelSequence tokens;
  double log_prob = 0.0;  // greedy: path score; beam: merged prefix score
};

/// log P(. | t, prefix) for all frames, flat [frames x (V+1)], blank at 0.
using PrefixScorer = std::function<std::vector<double>(const LabelSequence& prefix)>;

DecodeHypothesis greedy_search(std::size_t frames, std::size_t vocab, const PrefixScorer& scorer,
                               std::size_t max_symbols_per_frame);
/// Frame-synchronous prefix beam search. Within a frame, blank extensions
/// (which move to the next frame, merging equal prefixes by log-sum-exp) and
/// label extensions (which stay) compete for `beam` slots; ties keep
/// generation order (blank, then labels ascending), so beam 1 is greedy.
DecodeHypothesis beam_search(std::size_t frames, std::size_t vocab, const PrefixScorer& scorer, std::size_t beam,
                             std::size_t max_symbols_per_frame);

/// Decodes one utterance; `history` follows the model's long-form flags.
DecodeHypothesis decode_utterance(const FntModel& model, const FeatureMatrix& x,
                                  const std::vector<HistoryUtterance>& history, const DecodeOptions& opts);

struct WerReport {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const;
  WerReport& operator+=(const WerReport& o);
};

/// Unit-cost Levenshtein alignment. Empty reference throws.
WerReport wer(const LabelSequence& ref, const LabelSequence& hyp);

struct UtteranceResult {
  std::size_t utt_index = 0;
  LabelSequence hypothesis;
  WerReport report;
};

struct SessionResult {
  std::string session_id;
  std::vector<UtteranceResult> utterances;
  WerReport report;
};

/// Decodes a session in utt_index order. The decoder only sees features and
/// the history tokens it is allowed to see; references of the current and
/// later utterances reach only the scorer.
SessionResult decode_session(const FntModel& model, const ManifestSession& session, Provenance source,
                             const DecodeOptions& opts);

struct CorpusResult {
  std::vector<SessionResult> sessions;
  WerReport report;
};

/// Sessions are independent and decoded on up to `threads` workers.
CorpusResult decode_corpus(const FntModel& model, const std::vector<ManifestSession>& sessions,
                           Provenance source, const DecodeOptions& opts, std::size_t threads = 1);

}  // namespace lfnt
