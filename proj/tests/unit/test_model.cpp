// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "longfnt/grad_check.hpp"
#include "longfnt/model.hpp"
#include "longfnt/ops.hpp"
#include "model_util.hpp"
#include "test_util.hpp"

using namespace lfnt;
using namespace lfnt::testing;

namespace {

const std::vector<HistoryUtterance> kNoHistory;

double logsumexp(const std::vector<double>& v) {
  double m = -1e300;
  for (double x : v) m = std::max(m, x);
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

TEST_CASE("encoder shapes, zero-layer identity, determinism") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(1);
  ModelConfig c = micro_config();
  c.subsample = 4;
  c.encoder_layers = 0;
  FntModel m(c);
  const auto x = random_features(16, 3, rng);
  Tensor h = m.encode(x);
  CHECK(h.rows() == 4);
  CHECK(h.cols() == 4);

  // Rebuild the expected value from the subsampler parameters.
  std::vector<double> xv(x.data.begin(), x.data.end());
  Tensor s;
  {
    auto named = m.named_parameters();
    Subsampler ref;
    ref.factor = 4;
    for (auto& [n, t] : named) {
      if (n == "encoder.subsample.conv0.weight" || n == "encoder.subsample.conv1.weight") ref.conv_weights.push_back(t);
      if (n == "encoder.subsample.conv0.bias" || n == "encoder.subsample.conv1.bias") ref.conv_biases.push_back(t);
      if (n == "encoder.subsample.project.weight") ref.project.weight = t;
      if (n == "encoder.subsample.project.bias") ref.project.bias = t;
    }
    s = add_positional_encoding(ref(Tensor::from_values({16, 3}, xv)), 0);
  }
  CHECK(h.values() == s.values());

  c.encoder_layers = 2;
  FntModel a(c), b(c);
  CHECK(a.encode(x).values() == b.encode(x).values());
}

TEST_CASE("blank branch: zero joint weights give the output bias") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(2);
  FntModel m(micro_config());
  Tensor w_enc = param(m, "joint.encoder.weight"), b_enc = param(m, "joint.encoder.bias");
  Tensor w_pred = param(m, "joint.predictor.weight"), b_out = param(m, "joint.output.bias");
  zero_param(w_enc);
  zero_param(b_enc);
  zero_param(w_pred);
  b_out.assign(std::vector<double>{0.37});
  const auto x = random_features(3, 3, rng);
  const auto s = m.scores(x, {1, 3}, kNoHistory);
  CHECK(s.blank.rows() == 9);  // T'=3, U=2 -> 3x3 lattice
  for (double v : s.blank.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("vocabulary predictor is a causal standalone LM") {
  PrecisionScope p64(DType::kF64);
  ModelConfig c = micro_config(5);
  FntModel m(c);
  SUBCASE("uniform output gives perplexity V+1 (V tokens plus end of utterance)") {
    Tensor w = param(m, "vocab.output.weight"), b = param(m, "vocab.output.bias");
    zero_param(w);
    zero_param(b);
    const LabelSequence y{1, 4, 2};
    const double nll = lm_loss(m.vocab_predictor(y, Tensor()), y, kBlank).item();
    CHECK(std::exp(nll) == doctest::Approx(6.0).epsilon(1e-12));
  }
  SUBCASE("causality") {
    const auto a = m.vocab_predictor({1, 2, 3, 4}, Tensor()).values();
    const auto b = m.vocab_predictor({1, 2, 5, 4}, Tensor()).values();
    const std::size_t C = 6;
    // Row r sees inputs [0, y_1..y_r]; changing y_3 affects rows >= 3.
    for (std::size_t i = 0; i < 3 * C; ++i) CHECK(a[i] == b[i]);
    bool changed = false;
    for (std::size_t i = 3 * C; i < 4 * C; ++i) changed |= a[i] != b[i];
    CHECK(changed);
  }
}

TEST_CASE("ctc projection") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(3);
  FntModel m(micro_config(4));
  const auto x = random_features(5, 3, rng);
  const Tensor h = m.encode(x);
  Tensor z = m.ctc_projection(h);
  for (std::size_t t = 0; t < 5; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += std::exp(z.value(t * 5 + k));
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  const LabelSequence y{2, 2};
  CHECK(ctc_loss(z, y).item() ==
        doctest::Approx(brute_force_ctc_loss(z.values(), 5, 5, y)).epsilon(1e-10));

  Tensor w = param(m, "ctc.proj.weight"), b = param(m, "ctc.proj.bias");
  zero_param(w);
  zero_param(b);
  for (double v : m.ctc_projection(h).values()) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("fusion and factorized posterior") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(4);
  const std::size_t V = 4;
  FntModel m(micro_config(V));
  const auto x = random_features(4, 3, rng);
  const LabelSequence y{3, 1};
  const std::size_t U1 = 3;

  SUBCASE("matches a scalar reference") {
    Tensor beta = m.beta();
    beta.assign(std::vector<double>{0.7});
    const auto s = m.scores(x, y, kNoHistory);
    const auto zb = s.blank.values(), zt = s.ctc.values(), zl = s.lm.values(), lp = s.log_posterior.values();
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t u = 0; u < U1; ++u) {
        std::vector<double> row{zb[t * U1 + u]};
        for (std::size_t k = 1; k <= V; ++k) row.push_back(zt[t * (V + 1) + k] + 0.7 * zl[u * (V + 1) + k]);
        const double z = logsumexp(row);
        for (std::size_t k = 0; k <= V; ++k) CHECK(std::abs(lp[(t * U1 + u) * (V + 1) + k] - (row[k] - z)) <= 1e-12);
        double total = 0;
        for (std::size_t k = 0; k <= V; ++k) total += std::exp(lp[(t * U1 + u) * (V + 1) + k]);
        CHECK(std::abs(total - 1.0) <= 1e-5);
      }
    }
  }
  SUBCASE("beta = 0 leaves only the acoustic vocabulary score") {
    Tensor beta = m.beta();
    beta.assign(std::vector<double>{0.0});
    const auto s = m.scores(x, y, kNoHistory);
    const auto zb = s.blank.values(), zt = s.ctc.values(), lp = s.log_posterior.values();
    for (std::size_t t = 0; t < s.frames; ++t) {
      const std::size_t r = t * U1 + 1;
      // log P[k] - log P[blank] = z_V_t[k] - z_B for every vocabulary k.
      for (std::size_t k = 1; k <= V; ++k) {
        CHECK(std::abs((lp[r * (V + 1) + k] - lp[r * (V + 1)]) - (zt[t * (V + 1) + k] - zb[r])) <= 1e-12);
      }
    }
  }
  SUBCASE("all-equal scores give a uniform posterior") {
    for (auto name : {"ctc.proj.weight", "ctc.proj.bias", "vocab.output.weight", "vocab.output.bias",
                      "joint.output.weight"}) {
      Tensor t = param(m, name);
      zero_param(t);
    }
    // Uniform z_V_t = -ln 5 and z_V_l = -ln 5; beta=1 gives -2 ln 5 per vocab entry.
    Tensor b = param(m, "joint.output.bias");
    b.assign(std::vector<double>{-2.0 * std::log(5.0)});
    for (double v : m.scores(x, y, kNoHistory).log_posterior.values()) {
      CHECK(std::exp(v) == doctest::Approx(1.0 / (V + 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("composite loss") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(5);
  const auto x = random_features(6, 3, rng);
  const LabelSequence y{2, 4};
  ModelConfig c = micro_config(4);
  CHECK(c.lambda_ctc == 0.1);
  CHECK(c.lambda_lm == 0.5);

  FntModel m(c);
  const auto full = m.loss(x, y, kNoHistory);
  CHECK(full.total.item() ==
        doctest::Approx(full.transducer + 0.5 * full.lm + 0.1 * full.ctc).epsilon(1e-12));
  CHECK(full.transducer == doctest::Approx(brute_force_transducer_loss(
                                               m.scores(x, y, kNoHistory).log_posterior.values(), {6, 2, 5}, y))
                               .epsilon(1e-10));

  c.lambda_lm = 0.0;
  c.lambda_ctc = 0.0;
  FntModel bare(c);
  const auto only = bare.loss(x, y, kNoHistory);
  CHECK(only.total.item() == only.transducer);
  CHECK(only.transducer == full.transducer);
}

TEST_CASE("end-to-end M-FNT gradient check (T=6, U=2, V=4)") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(6);
  const auto x = random_features(6, 3, rng);
  const LabelSequence y{2, 4};
  FntModel m(micro_config(4));
  std::vector<Tensor> params;
  for (auto& [n, t] : m.named_parameters()) params.push_back(t);
  GradCheckOptions opts;
  opts.abs_floor = 1e-5;
  auto report = grad_check([&] { return m.loss(x, y, kNoHistory).total; }, params, opts);
  INFO(report.worst_param);
  CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("separation: label history never changes the acoustic vocabulary score") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(7);
  FntModel m(micro_config(4));
  const auto x = random_features(5, 3, rng);
  const auto a = m.scores(x, {1, 2}, kNoHistory), b = m.scores(x, {4, 3}, kNoHistory);
  CHECK(a.ctc.values() == b.ctc.values());
  CHECK(a.lm.values() != b.lm.values());
}

TEST_CASE("beta receives a gradient") {
  std::mt19937_64 rng(8);
  FntModel m(micro_config(4));
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = random_features(5, 3, rng);
    Tensor beta = m.beta();
    beta.zero_grad();
    m.loss(x, {1 + trial % 4, 2}, kNoHistory).total.backward();
    CHECK(std::abs(beta.grad_values()[0]) > 0.0);
  }
}

TEST_CASE("C-T baseline") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(9);
  ModelConfig c = micro_config(4);
  c.architecture = Architecture::kCT;
  FntModel m(c);
  const auto x = random_features(4, 3, rng);
  const auto s = m.scores(x, {1, 3}, kNoHistory);
  CHECK(s.log_posterior.shape() == Shape{4 * 3, 5});
  CHECK(m.loss(x, {1, 3}, kNoHistory).total.item() >= 0.0);
  for (auto& [n, t] : m.named_parameters()) CHECK(n.rfind("vocab.", 0) != 0);
  std::vector<Tensor> params;
  for (auto& [n, t] : m.named_parameters()) params.push_back(t);
  GradCheckOptions opts;
  opts.abs_floor = 1e-5;
  CHECK(grad_check([&] { return m.loss(x, {1, 3}, kNoHistory).total; }, params, opts).max_rel_error <= 1e-4);
}

TEST_CASE("decoding posteriors equal training posteriors") {
  std::mt19937_64 rng(10);
  for (auto arch : {Architecture::kMFNT, Architecture::kCT}) {
    ModelConfig c = micro_config(4);
    c.architecture = arch;
    FntModel m(c);
    const auto x = random_features(5, 3, rng);
    const LabelSequence y{3, 1, 2};
    const auto lp = m.scores(x, y, kNoHistory).log_posterior.values();
    const auto ctx = m.prepare(x, kNoHistory);
    for (std::size_t u = 0; u <= y.size(); ++u) {
      const LabelSequence prefix(y.begin(), y.begin() + static_cast<long>(u));
      const auto step = m.prefix_log_probs(ctx, prefix);
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(step[t * 5 + k] - lp[(t * 4 + u) * 5 + k]) <= 1e-5);
    }
  }
}

TEST_CASE("config entries round-trip") {
  ModelConfig c = micro_config(7);
  c.architecture = Architecture::kCT;
  c.longform.sentence_mode = SentenceMode::kBoth;
  c.longform.token_level = true;
  c.longform.n_text = 3;
  c.lambda_lm = 0.25;
  ModelConfig d;
  CHECK(apply_model_config(model_config_entries(c), d).empty());
  CHECK(model_config_entries(d) == model_config_entries(c));
  CHECK_THROWS_AS(apply_model_config({{"model.vocab_size", "-3"}}, d), ShapeError);
  CHECK(apply_model_config({{"model.bogus", "1"}}, d) == std::vector<std::string>{"model.bogus"});
  ModelConfig bad;
  bad.vocab_size = 1;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}
