// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "doctest.h"
#include "longfnt/decode.hpp"
#include "model_util.hpp"

using namespace lfnt;

namespace {

// Recursive edit distance, independent of the library's table and backtrace.
std::size_t edit_distance(const LabelSequence& a, const LabelSequence& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const std::size_t r = std::min({go(i + 1, j + 1) + (a[i] != b[j]), go(i + 1, j) + 1, go(i, j + 1) + 1});
    return memo[key] = r;
  };
  return go(0, 0);
}

LabelSequence random_labels(std::mt19937_64& rng, std::size_t max_len, std::int64_t vocab) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::int64_t> tok(1, vocab);
  LabelSequence s(len(rng));
  for (auto& t : s) t = tok(rng);
  return s;
}

// Deterministic prefix-dependent log-softmax rows over [frames x (vocab+1)].
PrefixScorer random_scorer(std::size_t frames, std::size_t vocab, std::uint64_t seed, double sharpness = 2.0) {
  return [=](const LabelSequence& prefix) {
    std::uint64_t h = seed;
    for (auto t : prefix) h = h * 1000003 + static_cast<std::uint64_t>(t) + 17;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, sharpness);
    std::vector<double> out(frames * (vocab + 1));
    for (std::size_t t = 0; t < frames; ++t) {
      double* row = out.data() + t * (vocab + 1);
      double m = -INFINITY;
      for (std::size_t v = 0; v <= vocab; ++v) m = std::max(m, row[v] = n(rng));
      double z = 0.0;
      for (std::size_t v = 0; v <= vocab; ++v) z += std::exp(row[v] - m);
      for (std::size_t v = 0; v <= vocab; ++v) row[v] -= m + std::log(z);
    }
    return out;
  };
}

double lse(double a, double b) {
  if (a == -INFINITY) return b;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Exact label-sequence posterior by enumerating every alignment.
std::map<LabelSequence, double> exact_posterior(std::size_t frames, std::size_t vocab, const PrefixScorer& scorer,
                                                std::size_t max_sym) {
  std::map<LabelSequence, double> out;
  std::function<void(std::size_t, LabelSequence&, std::size_t, double)> walk =
      [&](std::size_t t, LabelSequence& prefix, std::size_t k, double score) {
        if (t == frames) {
          auto [it, fresh] = out.emplace(prefix, score);
          if (!fresh) it->second = lse(it->second, score);
          return;
        }
        const auto lp = scorer(prefix);
        const double* row = lp.data() + t * (vocab + 1);
        walk(t + 1, prefix, 0, score + row[0]);
        if (k == max_sym) return;
        for (std::size_t v = 1; v <= vocab; ++v) {
          prefix.push_back(static_cast<std::int64_t>(v));
          walk(t, prefix, k + 1, score + row[v]);
          prefix.pop_back();
        }
      };
  LabelSequence prefix;
  walk(0, prefix, 0, 0.0);
  return out;
}

ModelConfig decode_model(std::size_t n_text) {
  ModelConfig c = testing::micro_config(6);
  c.feature_dim = 4;
  c.longform.n_text = n_text;
  if (n_text) {
    c.longform.sentence_mode = SentenceMode::kOutputAdd;
    c.longform.token_level = true;
  }
  return c;
}

void randomize_model(FntModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : m.named_parameters()) testing::randomize(t, rng, 0.6);
}

ManifestSession random_session(std::mt19937_64& rng, std::size_t utterances) {
  ManifestSession s;
  s.id = "s0007";
  for (std::size_t i = 0; i < utterances; ++i) {
    LabelSequence y = random_labels(rng, 3, 6);
    if (y.empty()) y.push_back(1);
    s.records.push_back({s.id, i, "", y, ""});
    s.features.push_back(std::make_shared<const FeatureMatrix>(testing::random_features(5 + i, 4, rng)));
  }
  return s;
}

}  // namespace

TEST_CASE("word error counts on hand cases") {
  CHECK(wer({1, 2, 3}, {1, 2, 3}).errors() == 0);
  const WerReport sub = wer({1, 2, 3}, {1, 9, 3});
  CHECK(sub.substitutions == 1);
  CHECK(sub.errors() == 1);
  CHECK(sub.wer() == doctest::Approx(1.0 / 3.0));
  const WerReport del = wer({1, 2, 3}, {1, 3});
  CHECK(del.deletions == 1);
  CHECK(del.errors() == 1);
  const WerReport ins = wer({1, 2}, {1, 5, 2, 6});
  CHECK(ins.insertions == 2);
  CHECK(ins.wer() == doctest::Approx(1.0));
  CHECK(wer({4, 4}, {}).deletions == 2);
  CHECK_THROWS_AS(wer({}, {1}), std::invalid_argument);

  WerReport total = sub;
  total += ins;
  CHECK(total.reference_length == 5);
  CHECK(total.wer() == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("word error counts agree with an independent edit distance") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 400; ++trial) {
    LabelSequence ref = random_labels(rng, 9, 4);
    if (ref.empty()) ref.push_back(2);
    const LabelSequence hyp = random_labels(rng, 9, 4);
    const WerReport r = wer(ref, hyp);
    CHECK(r.errors() == edit_distance(ref, hyp));
    CHECK(r.reference_length == ref.size());
    CHECK(ref.size() - r.deletions + r.insertions == hyp.size());
    // Relabelling both sides consistently leaves the counts unchanged.
    LabelSequence ref2 = ref, hyp2 = hyp;
    for (auto& t : ref2) t = 5 - t;
    for (auto& t : hyp2) t = 5 - t;
    CHECK(wer(ref2, hyp2).errors() == r.errors());
  }
}

TEST_CASE("greedy search follows the argmax and respects the symbol cap") {
  const std::size_t T = 3, V = 2;
  const PrefixScorer all_blank = [&](const LabelSequence&) {
    return std::vector<double>{std::log(0.7), std::log(0.2), std::log(0.1),  //
                               std::log(0.6), std::log(0.3), std::log(0.1),  //
                               std::log(0.9), std::log(0.05), std::log(0.05)};
  };
  const auto g = greedy_search(T, V, all_blank, 5);
  CHECK(g.tokens.empty());
  CHECK(g.log_prob == doctest::Approx(std::log(0.7 * 0.6 * 0.9)));

  const PrefixScorer always_two = [&](const LabelSequence&) {
    std::vector<double> row{std::log(0.2), std::log(0.1), std::log(0.7)};
    std::vector<double> out;
    for (std::size_t t = 0; t < T; ++t) out.insert(out.end(), row.begin(), row.end());
    return out;
  };
  const auto capped = greedy_search(T, V, always_two, 2);
  CHECK(capped.tokens == LabelSequence(6, 2));
  CHECK(capped.log_prob == doctest::Approx(6 * std::log(0.7) + 3 * std::log(0.2)));
  CHECK(greedy_search(T, V, always_two, 0).tokens.empty());
}

TEST_CASE("beam width one reproduces greedy search") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t T = 2 + seed % 5, V = 2 + seed % 3;
    const auto scorer = random_scorer(T, V, seed);
    const auto g = greedy_search(T, V, scorer, 3);
    const auto b = beam_search(T, V, scorer, 1, 3);
    CHECK(b.tokens == g.tokens);
    CHECK(b.log_prob == doctest::Approx(g.log_prob).epsilon(1e-12));
  }
  CHECK_THROWS_AS(beam_search(2, 2, random_scorer(2, 2, 0), 0, 3), std::invalid_argument);
}

TEST_CASE("wide beams find the exact best label sequence") {
  int checked = 0;
  for (std::size_t T : {2, 3}) {
    for (std::size_t max_sym : {1, 2}) {
      for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const std::size_t V = 2;
        const auto scorer = random_scorer(T, V, 1000 + seed, 1.5);
        const auto exact = exact_posterior(T, V, scorer, max_sym);
        auto best = exact.begin();
        double z = -INFINITY;
        for (auto it = exact.begin(); it != exact.end(); ++it) {
          z = lse(z, it->second);
          if (it->second > best->second) best = it;
        }
        CHECK(z <= 1e-12);  // the symbol cap discards mass
        const auto b = beam_search(T, V, scorer, 512, max_sym);
        CHECK(b.tokens == best->first);
        CHECK(b.log_prob == doctest::Approx(best->second).epsilon(1e-10));
        CHECK(b.log_prob >= greedy_search(T, V, scorer, max_sym).log_prob - 1e-12);
        // A narrower beam can only lose probability mass relative to the exact optimum.
        const auto narrow = beam_search(T, V, scorer, 2, max_sym);
        CHECK(narrow.log_prob <= best->second + 1e-12);
        ++checked;
      }
    }
  }
  CHECK(checked == 100);
}

TEST_CASE("model decoding: greedy equals beam one") {
  FntModel model(decode_model(1));
  randomize_model(model, 3);
  std::mt19937_64 rng(5);
  const FeatureMatrix x = testing::random_features(11, 4, rng);
  const std::vector<HistoryUtterance> hist{{{1, 2, 3}, nullptr}};
  const auto g = decode_utterance(model, x, hist, {0, 3});
  const auto b = decode_utterance(model, x, hist, {1, 3});
  CHECK(b.tokens == g.tokens);
  CHECK(b.log_prob == doctest::Approx(g.log_prob).epsilon(1e-9));
}

TEST_CASE("session decoding without history equals isolated decoding") {
  FntModel model(decode_model(0));
  randomize_model(model, 8);
  std::mt19937_64 rng(9);
  const ManifestSession s = random_session(rng, 4);
  const DecodeOptions opts{3, 3};
  for (Provenance p : {Provenance::kReference, Provenance::kHypothesis}) {
    const SessionResult r = decode_session(model, s, p, opts);
    REQUIRE(r.utterances.size() == 4);
    WerReport sum;
    for (std::size_t i = 0; i < 4; ++i) {
      const auto alone = decode_utterance(model, *s.features[i], {}, opts);
      CHECK(r.utterances[i].hypothesis == alone.tokens);
      CHECK(r.utterances[i].report.errors() == wer(s.records[i].tokens, alone.tokens).errors());
      sum += r.utterances[i].report;
    }
    CHECK(r.report.errors() == sum.errors());
    CHECK(r.report.reference_length == sum.reference_length);
  }
}

TEST_CASE("session decoding with history: first utterance is source independent") {
  FntModel model(decode_model(2));
  randomize_model(model, 12);
  std::mt19937_64 rng(13);
  const ManifestSession s = random_session(rng, 4);
  const DecodeOptions opts{2, 3};
  const auto gt = decode_session(model, s, Provenance::kReference, opts);
  const auto hyp = decode_session(model, s, Provenance::kHypothesis, opts);
  CHECK(gt.utterances[0].hypothesis == hyp.utterances[0].hypothesis);
  CHECK(gt.utterances[0].hypothesis == decode_utterance(model, *s.features[0], {}, opts).tokens);

  // Utterance 2 under gt history sees the two references.
  const std::vector<HistoryUtterance> ref_hist{{s.records[0].tokens, s.features[0]},
                                               {s.records[1].tokens, s.features[1]}};
  CHECK(gt.utterances[2].hypothesis == decode_utterance(model, *s.features[2], ref_hist, opts).tokens);
  const std::vector<HistoryUtterance> hyp_hist{{hyp.utterances[0].hypothesis, s.features[0]},
                                               {hyp.utterances[1].hypothesis, s.features[1]}};
  CHECK(hyp.utterances[2].hypothesis == decode_utterance(model, *s.features[2], hyp_hist, opts).tokens);

  ManifestSession shuffled = s;
  std::swap(shuffled.records[1], shuffled.records[2]);
  CHECK_THROWS_AS(decode_session(model, shuffled, Provenance::kReference, opts), FormatError);
  ManifestSession missing = s;
  missing.features[1] = nullptr;
  CHECK_THROWS_AS(decode_session(model, missing, Provenance::kReference, opts), FormatError);
}

TEST_CASE("corpus decoding is independent of the thread count") {
  FntModel model(decode_model(1));
  randomize_model(model, 21);
  std::mt19937_64 rng(22);
  std::vector<ManifestSession> sessions;
  for (int i = 0; i < 5; ++i) {
    sessions.push_back(random_session(rng, 3));
    sessions.back().id = "s000" + std::to_string(i);
    for (auto& r : sessions.back().records) r.session_id = sessions.back().id;
  }
  const auto one = decode_corpus(model, sessions, Provenance::kHypothesis, {2, 3}, 1);
  const auto three = decode_corpus(model, sessions, Provenance::kHypothesis, {2, 3}, 3);
  REQUIRE(one.sessions.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(one.sessions[i].session_id == sessions[i].id);
    for (std::size_t u = 0; u < 3; ++u) {
      CHECK(one.sessions[i].utterances[u].hypothesis == three.sessions[i].utterances[u].hypothesis);
    }
  }
  CHECK(one.report.errors() == three.report.errors());

  sessions[3].features[0] = nullptr;
  CHECK_THROWS_AS(decode_corpus(model, sessions, Provenance::kHypothesis, {2, 3}, 3), FormatError);
}
