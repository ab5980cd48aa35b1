// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/decode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace lfnt {

namespace {

class CachedScorer {
 public:
  explicit CachedScorer(const PrefixScorer& scorer) : scorer_(scorer) {}
  const std::vector<double>& operator()(const LabelSequence& prefix) {
    auto it = cache_.find(prefix);
    if (it == cache_.end()) it = cache_.emplace(prefix, scorer_(prefix)).first;
    return it->second;
  }

 private:
  const PrefixScorer& scorer_;
  std::map<LabelSequence, std::vector<double>> cache_;
};

double log_add(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

struct Hyp {
  LabelSequence prefix;
  double score = 0.0;
};

void sort_desc(std::vector<Hyp>& h) {
  std::stable_sort(h.begin(), h.end(), [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
}

}  // namespace

DecodeHypothesis greedy_search(std::size_t frames, std::size_t vocab, const PrefixScorer& scorer,
                               std::size_t max_symbols_per_frame) {
  DecodeHypothesis out;
  const std::size_t width = vocab + 1;
  std::vector<double> lp = scorer(out.tokens);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t emitted = 0;; ++emitted) {
      const double* row = lp.data() + t * width;
      std::size_t best = 0;
      if (emitted < max_symbols_per_frame) {
        for (std::size_t v = 1; v < width; ++v) {
          if (row[v] > row[best]) best = v;
        }
      }
      out.log_prob += row[best];
      if (best == 0) break;
      out.tokens.push_back(static_cast<std::int64_t>(best));
      lp = scorer(out.tokens);
    }
  }
  return out;
}

DecodeHypothesis beam_search(std::size_t frames, std::size_t vocab, const PrefixScorer& scorer, std::size_t beam,
                             std::size_t max_symbols_per_frame) {
  if (beam == 0) throw std::invalid_argument("beam_search: beam must be >= 1");
  CachedScorer score(scorer);
  const std::size_t width = vocab + 1;
  std::vector<Hyp> current{{}};
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<Hyp> next;
    auto merge = [&next](const LabelSequence& prefix, double s) {
      for (auto& h : next) {
        if (h.prefix == prefix) {
          h.score = log_add(h.score, s);
          return;
        }
      }
      next.push_back({prefix, s});
    };
    std::vector<Hyp> active = current;
    for (std::size_t k = 0; k <= max_symbols_per_frame && !active.empty(); ++k) {
      struct Candidate {
        std::size_t parent;
        std::size_t label;
        double score;
      };
      std::vector<Candidate> cand;
      for (std::size_t i = 0; i < active.size(); ++i) {
        const double* row = score(active[i].prefix).data() + t * width;
        cand.push_back({i, 0, active[i].score + row[0]});
        if (k == max_symbols_per_frame) continue;
        for (std::size_t v = 1; v < width; ++v) cand.push_back({i, v, active[i].score + row[v]});
      }
      std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
      if (cand.size() > beam) cand.resize(beam);
      std::vector<Hyp> extended;
      for (const auto& c : cand) {
        if (c.label == 0) {
          merge(active[c.parent].prefix, c.score);
        } else {
          Hyp h{active[c.parent].prefix, c.score};
          h.prefix.push_back(static_cast<std::int64_t>(c.label));
          extended.push_back(std::move(h));
        }
      }
      active = std::move(extended);
    }
    sort_desc(next);
    if (next.size() > beam) next.resize(beam);
    current = std::move(next);
  }
  return {current.front().prefix, current.front().score};
}

DecodeHypothesis decode_utterance(const FntModel& model, const FeatureMatrix& x,
                                  const std::vector<HistoryUtterance>& history, const DecodeOptions& opts) {
  const DecodeContext ctx = model.prepare(x, history);
  const PrefixScorer scorer = [&](const LabelSequence& prefix) { return model.prefix_log_probs(ctx, prefix); };
  const std::size_t vocab = model.config().vocab_size;
  if (opts.beam == 0) return greedy_search(ctx.frames, vocab, scorer, opts.max_symbols_per_frame);
  return beam_search(ctx.frames, vocab, scorer, opts.beam, opts.max_symbols_per_frame);
}

// -- WER -------------------------------------------------------------------------------

double WerReport::wer() const {
  return reference_length ? static_cast<double>(errors()) / static_cast<double>(reference_length) : 0.0;
}

WerReport& WerReport::operator+=(const WerReport& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  reference_length += o.reference_length;
  return *this;
}

WerReport wer(const LabelSequence& ref, const LabelSequence& hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  WerReport r;
  r.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      r.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  return r;
}

// -- sessions --------------------------------------------------------------------------

SessionResult decode_session(const FntModel& model, const ManifestSession& session, Provenance source,
                             const DecodeOptions& opts) {
  const auto& lf = model.config().longform;
  SessionHistory history(session.id, std::max(lf.n_text, lf.n_speech), source);
  SessionResult out;
  out.session_id = session.id;
  for (std::size_t i = 0; i < session.records.size(); ++i) {
    const auto& rec = session.records[i];
    if (rec.utt_index != i) throw FormatError("session " + session.id + ": utterances out of order");
    if (!session.features.at(i)) throw FormatError("session " + session.id + ": missing features for utterance " +
                                                   std::to_string(i));
    const auto hyp = decode_utterance(model, *session.features[i], history.view(), opts);
    UtteranceResult u{i, hyp.tokens, wer(rec.tokens, hyp.tokens)};
    out.report += u.report;
    history.push(i, source,
                 {source == Provenance::kReference ? rec.tokens : hyp.tokens, session.features[i]});
    out.utterances.push_back(std::move(u));
  }
  return out;
}

CorpusResult decode_corpus(const FntModel& model, const std::vector<ManifestSession>& sessions, Provenance source,
                           const DecodeOptions& opts, std::size_t threads) {
  CorpusResult out;
  out.sessions.resize(sessions.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < sessions.size();) {
      try {
        out.sessions[i] = decode_session(model, sessions[i], source, opts);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, sessions.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  for (const auto& s : out.sessions) out.report += s.report;
  return out;
}

}  // namespace lfnt
