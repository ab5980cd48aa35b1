// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/diagnostics.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include "longfnt/grad_check.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/model.hpp"
#include "longfnt/nn.hpp"
#include "longfnt/ops.hpp"

namespace lfnt {

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from_values(std::move(shape), v, requires_grad);
}

// sum(out * R) with a fixed random R.
Tensor project(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng, false)));
}

template <typename M>
std::vector<Tensor> params_of(M& module) {
  std::vector<Tensor> out;
  module.visit("m", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

std::vector<double> log_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(v[r * cols + c] = d(rng));
    for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] -= std::log(z);
  }
  return v;
}

ModelConfig micro_model(bool history) {
  ModelConfig c;
  c.vocab_size = 4;
  c.feature_dim = 3;
  c.subsample = 1;
  c.model_dim = 4;
  c.heads = 2;
  c.ffn_dim = 4;
  c.conv_kernel = 3;
  c.encoder_layers = 1;
  c.predictor_dim = 3;
  c.vocab_layers = 1;
  c.joint_dim = 3;
  c.longform.context_dim = 4;
  c.longform.projection_dim = 3;
  if (history) {
    c.longform.n_text = 1;
    c.longform.n_speech = 1;
    c.longform.sentence_mode = SentenceMode::kBoth;
    c.longform.token_level = true;
  }
  return c;
}

}  // namespace

std::vector<CheckResult> gradient_suite(std::uint64_t seed, double tolerance) {
  PrecisionScope f64(DType::kF64);
  std::mt19937_64 rng(seed);
  GradCheckOptions opts;
  opts.max_entries_per_param = 8;
  opts.abs_floor = 1e-5;
  const BlockConfig block{4, 2, 6, 3, 0.0};
  std::vector<CheckResult> out;
  auto run = [&](const std::string& name, std::vector<Tensor> params, const std::function<Tensor()>& loss) {
    out.push_back({name, grad_check(loss, params, opts).max_rel_error, tolerance});
  };

  {
    ParamInit init(seed + 1);
    MultiHeadAttention mha(4, 4, 2, init);
    Tensor x = random_tensor({5, 4}, rng);
    const auto mask = AttentionMask::causal(5);
    auto p = params_of(mha);
    p.push_back(x);
    run("attention", p, [&] { return project(mha(x, x, &mask), 1); });
  }
  {
    ParamInit init(seed + 2);
    MultiHeadAttention mha(4, 3, 2, init);
    Tensor q = random_tensor({3, 4}, rng), kv = random_tensor({4, 3}, rng);
    auto p = params_of(mha);
    p.push_back(q);
    p.push_back(kv);
    run("cross-attention", p, [&] { return project(mha(q, kv, nullptr), 2); });
  }
  {
    ParamInit init(seed + 3);
    TransformerLayer layer(block, 0, init);
    Tensor x = random_tensor({4, 4}, rng);
    const auto mask = AttentionMask::causal(4);
    auto p = params_of(layer);
    p.push_back(x);
    run("transformer layer", p, [&] { return project(layer(x, mask, nullptr), 3); });
  }
  {
    ParamInit init(seed + 4);
    TransformerLayer layer(block, 3, init);
    Tensor x = random_tensor({3, 4}, rng), ctx = random_tensor({2, 3}, rng);
    const auto mask = AttentionMask::causal(3);
    auto p = params_of(layer);
    p.push_back(x);
    p.push_back(ctx);
    run("transformer layer + cross-attention", p, [&] { return project(layer(x, mask, &ctx), 4); });
  }
  {
    ParamInit init(seed + 5);
    ConformerLayer layer(block, init);
    Tensor x = random_tensor({5, 4}, rng);
    auto p = params_of(layer);
    p.push_back(x);
    run("conformer layer", p, [&] { return project(layer(x, nullptr), 5); });
  }
  {
    ParamInit init(seed + 6);
    Lstm lstm(3, 2, 2, init);
    Tensor x = random_tensor({4, 3}, rng);
    auto p = params_of(lstm);
    p.push_back(x);
    run("lstm", p, [&] { return project(lstm(x), 6); });
  }
  {
    ParamInit init(seed + 7);
    Subsampler sub(3, 4, 4, init);
    Tensor x = random_tensor({9, 3}, rng);
    auto p = params_of(sub);
    p.push_back(x);
    run("subsampler", p, [&] { return project(sub(x), 7); });
  }
  {
    Tensor c = random_tensor({5, 3}, rng);
    run("mean+std pooling", {c}, [&] { return project(mean_std_pool(c), 8); });
  }
  for (bool history : {false, true}) {
    ModelConfig cfg = micro_model(history);
    cfg.seed = seed + 8;
    FntModel model(cfg);
    // Zero-initialized fusion weights would hide their own gradient paths.
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (auto& [name, t] : model.named_parameters()) {
      std::vector<double> v(t.numel());
      for (auto& x : v) x = d(rng);
      t.assign(v);
    }
    std::normal_distribution<float> n(0.0f, 1.0f);
    auto features = [&](std::size_t frames) {
      FeatureMatrix f(frames, 3);
      for (auto& v : f.data) v = n(rng);
      return f;
    };
    const FeatureMatrix x = features(6);
    std::vector<HistoryUtterance> hist;
    if (history) hist.push_back({{3, 1}, std::make_shared<const FeatureMatrix>(features(4))});
    const LabelSequence y{2, 4};
    std::vector<Tensor> p;
    for (auto& [name, t] : model.named_parameters()) p.push_back(t);
    run(history ? "longfnt micro model" : "m-fnt micro model", p, [&] { return model.loss(x, y, hist).total; });
  }
  return out;
}

LatticeOracleReport lattice_oracle(std::size_t instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LatticeOracleReport r;
  r.instances = instances;
  for (std::size_t i = 0; i < instances; ++i) {
    const std::size_t T = 1 + rng() % 4, U = rng() % 4, V = 2 + rng() % 2;
    LabelSequence y(U);
    for (auto& v : y) v = 1 + static_cast<std::int64_t>(rng() % (V - 1));
    const auto lp = log_rows(T * (U + 1), V, rng);
    const LatticeDims dims{T, U, V};
    r.max_transducer_diff = std::max(
        r.max_transducer_diff, std::abs(transducer_loss(lp, dims, y).loss - brute_force_transducer_loss(lp, dims, y)));
    const auto ctc_lp = log_rows(T, V, rng);
    const auto fast = ctc_loss(ctc_lp, T, V, y);
    const double slow = brute_force_ctc_loss(ctc_lp, T, V, y);
    if (std::isinf(slow) || !fast.feasible) {
      if (std::isinf(slow) && !fast.feasible) ++r.ctc_infeasible;
      else ++r.ctc_mismatch;
    } else {
      r.max_ctc_diff = std::max(r.max_ctc_diff, std::abs(fast.loss - slow));
    }
  }
  return r;
}

}  // namespace lfnt
