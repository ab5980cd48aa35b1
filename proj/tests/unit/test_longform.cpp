// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "longfnt/grad_check.hpp"
#include "longfnt/longform.hpp"
#include "longfnt/model.hpp"
#include "longfnt/ops.hpp"
#include "model_util.hpp"
#include "test_util.hpp"

using namespace lfnt;
using namespace lfnt::testing;

namespace {

const std::vector<HistoryUtterance> kNoHistory;

std::vector<HistoryUtterance> text_history(std::initializer_list<LabelSequence> utts) {
  std::vector<HistoryUtterance> h;
  for (const auto& u : utts) h.push_back({u, nullptr});
  return h;
}

ModelConfig text_config(SentenceMode sentence, bool token) {
  ModelConfig c = micro_config(4);
  c.longform.n_text = 2;
  c.longform.sentence_mode = sentence;
  c.longform.token_level = token;
  return c;
}

std::shared_ptr<const ContextTable> random_table(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ContextTable t{rows, dim, std::vector<float>(rows * dim)};
  for (auto& v : t.data) v = std::uniform_real_distribution<float>(-1, 1)(rng);
  return std::make_shared<const ContextTable>(std::move(t));
}

}  // namespace

TEST_CASE("session history window and ordering") {
  SessionHistory h("s1", 2, Provenance::kReference);
  h.push(0, Provenance::kReference, {{1}, nullptr});
  h.push(1, Provenance::kReference, {{2}, nullptr});
  h.push(2, Provenance::kReference, {{3}, nullptr});
  REQUIRE(h.size() == 2);
  CHECK(h.view()[0].tokens == LabelSequence{2});
  CHECK(h.view()[1].tokens == LabelSequence{3});
  CHECK_THROWS_AS(h.push(2, Provenance::kReference, {{4}, nullptr}), ShapeError);
  CHECK_THROWS_AS(h.push(3, Provenance::kHypothesis, {{4}, nullptr}), ShapeError);
  SessionHistory none("s2", 0, Provenance::kHypothesis);
  none.push(0, Provenance::kHypothesis, {{1}, nullptr});
  CHECK(none.view().empty());
}

TEST_CASE("context encoder: no-history row, joined length, frozen rows") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(1);
  ContextEncoder joint(4, BlockConfig{4, 2, 4, 3, 0.0}, 1, init);
  const auto ids = join_history(text_history({{1, 2, 3}, {4, 4, 1, 2}}), 2, joint.separator());
  CHECK(ids.size() == 8);
  CHECK(ids[3] == 5);
  CHECK(joint(ids).rows() == 8);

  Tensor empty = joint({});
  CHECK(empty.rows() == 1);
  Tensor again = joint({});
  CHECK(empty.values() == again.values());
  CHECK(join_history(text_history({{1}, {2}, {3}}), 1, 5) == std::vector<std::int64_t>{3});

  auto table = random_table(7, 3, 2);
  ContextEncoder frozen(4, table);
  Tensor c = frozen(ids);
  CHECK_FALSE(c.requires_grad());
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(c.value(i * 3 + j) == static_cast<double>(table->row(ids[i])[j]));
  Tensor nh = frozen({});
  for (std::size_t j = 0; j < 3; ++j) CHECK(nh.value(j) == static_cast<double>(table->row(6)[j]));
  std::vector<std::string> names;
  frozen.visit("context", [&](const std::string& n, Tensor&) { names.push_back(n); });
  CHECK(names.empty());

  auto small = random_table(6, 3, 3);
  CHECK_THROWS_AS(ContextEncoder(4, small), ShapeError);
  ContextEncoder wide(2, random_table(5, 3, 4));
  try {
    (void)wide(std::vector<std::int64_t>{1, 9, 7});
    FAIL("expected missing-id error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("7,9") != std::string::npos);
  }
}

TEST_CASE("LFCE round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "longfnt_test_table.lfce";
  auto table = random_table(9, 5, 5);
  write_context_table(path, *table);
  CHECK(read_context_table(path) == *table);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(read_context_table(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("N=0 long-form configuration is bit-identical to M-FNT") {
  std::mt19937_64 rng(6);
  const auto x = random_features(6, 3, rng);
  auto feats = std::make_shared<const FeatureMatrix>(random_features(5, 3, rng));
  std::vector<HistoryUtterance> hist{{{1, 2}, feats}};
  FntModel base(micro_config(4));
  ModelConfig c = text_config(SentenceMode::kBoth, true);
  c.longform.n_text = 0;
  c.longform.n_speech = 0;
  FntModel lf(c);
  CHECK(base.named_parameters().size() == lf.named_parameters().size());
  const auto a = base.loss(x, {3, 1}, kNoHistory), b = lf.loss(x, {3, 1}, hist);
  CHECK(a.total.item() == b.total.item());
  CHECK(base.scores(x, {3, 1}, kNoHistory).log_posterior.values() ==
        lf.scores(x, {3, 1}, hist).log_posterior.values());
}

TEST_CASE("zero-initialised integration reproduces M-FNT posteriors") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(7);
  const auto x = random_features(6, 3, rng);
  const auto hist = text_history({{1, 2, 2}, {4}});
  FntModel base(micro_config(4));
  const auto ref = base.scores(x, {3, 1}, kNoHistory).log_posterior.values();
  for (auto mode : {SentenceMode::kNone, SentenceMode::kOutputAdd, SentenceMode::kPrelinearConcat, SentenceMode::kBoth}) {
    for (bool token : {false, true}) {
      if (mode == SentenceMode::kNone && !token) continue;
      for (auto ctx : {ContextMode::kJoint, ContextMode::kFrozenExternal}) {
        ModelConfig c = text_config(mode, token);
        c.longform.context_mode = ctx;
        FntModel lf(c, ctx == ContextMode::kFrozenExternal ? random_table(7, 4, 8) : nullptr);
        CAPTURE(to_string(mode));
        CAPTURE(token);
        const auto got = lf.scores(x, {3, 1}, hist).log_posterior.values();
        CHECK(max_abs_diff(ref, got) <= 1e-6);
      }
    }
  }
}

TEST_CASE("sentence integration matches a scalar reference") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(9);
  for (auto mode : {SentenceMode::kOutputAdd, SentenceMode::kPrelinearConcat, SentenceMode::kBoth}) {
    FntModel m(text_config(mode, false));
    for (auto name : {"sentence.add.weight", "sentence.add.bias", "sentence.projection.weight",
                      "sentence.projection.bias", "sentence.output_context.weight"}) {
      Tensor t = param(m, name);
      randomize(t, rng);
    }
    Tensor p = random_tensor({3, 4}, rng, false);
    Tensor pooled = random_tensor({8}, rng, false);
    const auto got = m.vocab_output(p, pooled).values();

    auto vals = [&](const char* n) { return param(m, n).values(); };
    const auto Wv = vals("vocab.output.weight"), bv = vals("vocab.output.bias");
    const auto Wa = vals("sentence.add.weight"), ba = vals("sentence.add.bias");
    const auto Wp = vals("sentence.projection.weight"), bp = vals("sentence.projection.bias");
    const auto Wc = vals("sentence.output_context.weight");
    const auto pv = p.values(), cv = pooled.values();
    const bool pre = mode != SentenceMode::kOutputAdd, post = mode != SentenceMode::kPrelinearConcat;
    const std::size_t C = 5, D = 4, P = 3;
    std::vector<double> proj(P);
    for (std::size_t j = 0; j < P; ++j) {
      proj[j] = bp[j];
      for (std::size_t i = 0; i < 8; ++i) proj[j] += cv[i] * Wp[i * P + j];
      proj[j] = std::max(0.0, proj[j]);
    }
    std::vector<double> add(C);
    for (std::size_t k = 0; k < C; ++k) {
      add[k] = ba[k];
      for (std::size_t i = 0; i < 8; ++i) add[k] += cv[i] * Wa[i * C + k];
    }
    for (std::size_t r = 0; r < 3; ++r) {
      // Linear^V applied to the concatenation [ReLU(p) ; ReLU(Projection(c~))].
      std::vector<double> z(C);
      for (std::size_t k = 0; k < C; ++k) {
        z[k] = bv[k];
        for (std::size_t i = 0; i < D; ++i) z[k] += std::max(0.0, pv[r * D + i]) * Wv[i * C + k];
        if (pre)
          for (std::size_t j = 0; j < P; ++j) z[k] += proj[j] * Wc[j * C + k];
      }
      auto normalize = [&] {
        double m = -1e300, s = 0;
        for (double v : z) m = std::max(m, v);
        for (double v : z) s += std::exp(v - m);
        for (double& v : z) v -= m + std::log(s);
      };
      normalize();
      if (post) {
        for (std::size_t k = 0; k < C; ++k) z[k] += add[k];
        normalize();
      }
      for (std::size_t k = 0; k < C; ++k) CHECK(std::abs(got[r * C + k] - z[k]) <= 1e-12);
    }

    // c~ = 0 with zero biases is the identity.
    for (auto name : {"sentence.add.bias", "sentence.projection.bias"}) {
      Tensor t = param(m, name);
      zero_param(t);
    }
    Tensor zero_pooled = Tensor::zeros({8});
    FntModel plain(micro_config(4));
    CHECK(max_abs_diff(m.vocab_output(p, zero_pooled).values(), plain.vocab_output(p, Tensor()).values()) <= 1e-12);
  }
}

TEST_CASE("history order: token level sees it, pooled sentence context does not") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(10);
  const auto a = text_history({{1, 2}, {3, 4, 4}}), b = text_history({{3, 4, 4}, {1, 2}});
  {
    FntModel m(text_config(SentenceMode::kNone, true));
    for (auto& [n, t] : m.named_parameters()) {
      if (n.find("cross_attn.output") != std::string::npos) randomize(t, rng);
    }
    const LabelSequence y{2, 1};
    const auto za = m.vocab_predictor(y, m.context_embeddings(a)).values();
    const auto zb = m.vocab_predictor(y, m.context_embeddings(b)).values();
    CHECK(max_abs_diff(za, zb) > 1e-6);
    // Any single history token matters.
    const auto zc = m.vocab_predictor(y, m.context_embeddings(text_history({{1, 2}, {3, 4, 1}}))).values();
    CHECK(max_abs_diff(za, zc) > 1e-6);
  }
  {
    ModelConfig c = text_config(SentenceMode::kBoth, false);
    c.longform.context_mode = ContextMode::kFrozenExternal;
    FntModel m(c, random_table(7, 4, 11));
    for (auto& [n, t] : m.named_parameters()) {
      if (n.rfind("sentence.", 0) == 0) randomize(t, rng);
    }
    const LabelSequence y{2, 1};
    const auto za = m.vocab_predictor(y, m.context_embeddings(a)).values();
    const auto zb = m.vocab_predictor(y, m.context_embeddings(b)).values();
    CHECK(max_abs_diff(za, zb) <= 1e-12);
  }
}

TEST_CASE("gradient check through long-form text integration") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(12);
  ModelConfig c = text_config(SentenceMode::kBoth, true);
  c.vocab_layers = 2;
  FntModel m(c);
  std::vector<Tensor> params;
  for (auto& [n, t] : m.named_parameters()) {
    if (n.rfind("sentence.", 0) == 0 || n.find("cross_attn.output") != std::string::npos) randomize(t, rng);
    if (n.rfind("vocab.", 0) == 0 || n.rfind("context.", 0) == 0 || n.rfind("sentence.", 0) == 0) params.push_back(t);
  }
  const auto x = random_features(5, 3, rng);
  const auto hist = text_history({{1, 3}, {2}});
  GradCheckOptions opts;
  opts.abs_floor = 1e-5;
  opts.max_entries_per_param = 8;
  auto report = grad_check([&] { return m.loss(x, {4, 2}, hist).total; }, params, opts);
  INFO(report.worst_param);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("long-form speech encoder") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(13);
  ModelConfig c = micro_config(4);
  c.subsample = 2;
  c.conv_kernel = 3;
  c.longform.n_speech = 2;
  FntModel m(c);
  const auto x = random_features(8, 3, rng);
  auto h1 = std::make_shared<const FeatureMatrix>(random_features(5, 3, rng));
  auto h2 = std::make_shared<const FeatureMatrix>(random_features(7, 3, rng));

  CHECK(m.encode(x, kNoHistory).values() == m.encode(x).values());

  // History 5 -> 3 and 7 -> 4 frames (T_hist' = 7); current 8 -> 4.
  const std::vector<HistoryUtterance> hist{{{1}, h1}, {{2}, h2}};
  Tensor h = m.encode(x, hist);
  CHECK(h.rows() == 4);
  CHECK(max_abs_diff(h.values(), m.encode(x).values()) > 1e-6);

  // One conformer layer: with history keys hidden, frames beyond the conv
  // half-width of the boundary equal the isolated encoding.
  const auto blocked = m.encode(x, hist, true).values();
  const auto alone = m.encode(x).values();
  const std::size_t half = c.conv_kernel / 2, d = c.model_dim;
  for (std::size_t t = half; t < 4; ++t)
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(blocked[t * d + j] - alone[t * d + j]) <= 1e-5);

  // Only the last n_speech history utterances are used.
  c.longform.n_speech = 1;
  FntModel one(c);
  const std::vector<HistoryUtterance> just_last{{{2}, h2}};
  CHECK(one.encode(x, hist).values() == one.encode(x, just_last).values());

  FeatureMatrix tiny = random_features(1, 3, rng);
  CHECK_THROWS_AS(m.encode(tiny, hist), ShapeError);
}
