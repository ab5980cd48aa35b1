// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <benchmark/benchmark.h>

#include "longfnt/corpus.hpp"
#include "longfnt/decode.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/model.hpp"
#include "longfnt/train.hpp"

namespace {

using namespace lfnt;

std::vector<double> random_log_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(v[r * cols + c] = n(rng));
    for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] -= std::log(z);
  }
  return v;
}

LabelSequence random_labels(std::size_t n, std::size_t vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LabelSequence y(n);
  for (auto& v : y) v = 1 + static_cast<std::int64_t>(rng() % vocab);
  return y;
}

void BM_TransducerLoss(benchmark::State& state) {
  const std::size_t T = state.range(0), U = state.range(1), V = 65;
  const auto lp = random_log_rows(T * (U + 1), V, 1);
  const auto y = random_labels(U, V - 1, 2);
  for (auto _ : state) benchmark::DoNotOptimize(transducer_loss(lp, {T, U, V}, y).loss);
  state.SetItemsProcessed(state.iterations() * T * (U + 1));
}
BENCHMARK(BM_TransducerLoss)->Args({25, 6})->Args({50, 12})->Args({100, 24});

void BM_CtcLoss(benchmark::State& state) {
  const std::size_t T = state.range(0), U = state.range(1), V = 65;
  const auto lp = random_log_rows(T, V, 3);
  const auto y = random_labels(U, V - 1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(ctc_loss(lp, T, V, y).loss);
}
BENCHMARK(BM_CtcLoss)->Args({25, 6})->Args({100, 24});

const Corpus& bench_corpus() {
  static const Corpus corpus = [] {
    CorpusSpec cs;
    cs.seed = 11;
    cs.sessions = 20;
    cs.train_sessions = 10;
    cs.dev_sessions = 5;
    return generate_corpus(cs);
  }();
  return corpus;
}

ModelConfig bench_model(std::size_t history) {
  const CorpusSpec& cs = bench_corpus().model.spec;
  ModelConfig mc;
  mc.vocab_size = cs.vocab_size;
  mc.feature_dim = cs.feature_dim;
  mc.longform.n_text = history;
  mc.longform.n_speech = history;
  if (history) {
    mc.longform.sentence_mode = SentenceMode::kOutputAdd;
    mc.longform.token_level = true;
  }
  return mc;
}

void BM_EncoderForward(benchmark::State& state) {
  NoGradScope no_grad;
  const std::size_t history = state.range(0);
  FntModel model(bench_model(history));
  const auto& s = bench_corpus().sessions[0];
  std::vector<HistoryUtterance> hist;
  for (std::size_t h = 0; h < history; ++h) {
    const auto& u = s.utterances[h];
    hist.push_back({u.tokens, std::make_shared<const FeatureMatrix>(u.features)});
  }
  const FeatureMatrix& x = s.utterances[history].features;
  for (auto _ : state) benchmark::DoNotOptimize(model.encode(x, hist));
  state.counters["frames"] = static_cast<double>(x.frames);
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(2)->Unit(benchmark::kMicrosecond);

void BM_BeamDecode(benchmark::State& state) {
  FntModel model(bench_model(0));
  const auto& x = bench_corpus().sessions[0].utterances[0].features;
  DecodeOptions opts;
  opts.beam = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(decode_utterance(model, x, {}, opts));
}
BENCHMARK(BM_BeamDecode)->Arg(0)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const std::size_t history = state.range(0);
  FntModel model(bench_model(history));
  TrainConfig tc;
  tc.seed = 1;
  tc.batch_size = 8;
  Trainer trainer(model, make_examples(split_sessions(bench_corpus(), Split::kTrain), history), tc);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step().loss_total);
  state.SetItemsProcessed(state.iterations() * tc.batch_size);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
