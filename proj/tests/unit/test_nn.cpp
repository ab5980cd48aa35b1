// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "doctest.h"
#include "longfnt/grad_check.hpp"
#include "longfnt/nn.hpp"
#include "longfnt/ops.hpp"
#include "test_util.hpp"

using namespace lfnt;
using lfnt::testing::max_abs_diff;
using lfnt::testing::random_projection;
using lfnt::testing::random_tensor;

namespace {

template <typename M>
std::vector<Tensor> params_of(M& module) {
  std::vector<Tensor> out;
  module.visit("m", [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

template <typename M>
std::map<std::string, Tensor> named_params(M& module) {
  std::map<std::string, Tensor> out;
  module.visit("m", [&](const std::string& n, Tensor& t) { out.emplace(n, t); });
  return out;
}

// Row-major dense helpers for the attention oracle.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  const auto v = t.values();
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = v[i * t.cols() + j];
  return m;
}

Mat affine(const Mat& x, const Linear& l) {
  const Mat w = to_mat(l.weight);
  const auto b = l.bias.values();
  Mat y(x.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      y[i][j] = s;
    }
  return y;
}

Mat attention_oracle(const MultiHeadAttention& mha, const Mat& xq, const Mat& xkv,
                     const AttentionMask* mask) {
  const Mat q = affine(xq, mha.query), k = affine(xkv, mha.key), v = affine(xkv, mha.value);
  const std::size_t dh = mha.dim / mha.heads;
  Mat merged(xq.size(), std::vector<double>(mha.dim, 0.0));
  for (std::size_t h = 0; h < mha.heads; ++h) {
    for (std::size_t i = 0; i < xq.size(); ++i) {
      std::vector<double> s(xkv.size());
      double m = -1e300;
      for (std::size_t j = 0; j < xkv.size(); ++j) {
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i][h * dh + c] * k[j][h * dh + c];
        s[j] = (mask && !mask->allowed(i, j)) ? -1e300 : dot / std::sqrt(double(dh));
        m = std::max(m, s[j]);
      }
      double z = 0;
      for (auto& e : s) z += (e = (e <= -1e299 ? 0.0 : std::exp(e - m)));
      for (std::size_t j = 0; j < xkv.size(); ++j)
        for (std::size_t c = 0; c < dh; ++c) merged[i][h * dh + c] += s[j] / z * v[j][h * dh + c];
    }
  }
  return affine(merged, mha.output);
}

std::vector<double> flat(const Mat& m) {
  std::vector<double> v;
  for (const auto& r : m) v.insert(v.end(), r.begin(), r.end());
  return v;
}

}  // namespace

TEST_CASE("attention with a single key returns that key's projected value") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(1);
  MultiHeadAttention mha(8, 8, 2, init);
  std::mt19937_64 rng(2);
  Tensor q = random_tensor({5, 8}, rng, false), kv = random_tensor({1, 8}, rng, false);
  const auto out = mha(q, kv, nullptr).values();
  const auto expect = mha.output(mha.value(kv)).values();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(out[i * 8 + j] - expect[j]) <= 1e-12);
}

TEST_CASE("attention matches a per-head reference loop") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(3);
  MultiHeadAttention mha(8, 6, 4, init);
  std::mt19937_64 rng(4);
  Tensor q = random_tensor({3, 8}, rng, false), kv = random_tensor({5, 6}, rng, false);
  AttentionMask mask = AttentionMask::full(3, 5);
  mask.set(0, 1, false);
  mask.set(2, 4, false);
  CHECK(max_abs_diff(mha(q, kv, &mask).values(), flat(attention_oracle(mha, to_mat(q), to_mat(kv), &mask))) <=
        1e-12);
  CHECK(max_abs_diff(mha(q, kv, nullptr).values(), flat(attention_oracle(mha, to_mat(q), to_mat(kv), nullptr))) <=
        1e-12);
}

TEST_CASE("masked keys have no influence on the output") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(5);
  MultiHeadAttention mha(4, 4, 2, init);
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({4, 4}, rng, false);
  const auto causal = AttentionMask::causal(4);
  const auto base = mha(x, x, &causal).values();
  auto vals = x.values();
  for (std::size_t j = 0; j < 4; ++j) vals[3 * 4 + j] += 10.0;  // perturb the last key
  Tensor x2 = Tensor::from_values({4, 4}, vals);
  const auto moved = mha(x2, x2, &causal).values();
  for (std::size_t i = 0; i < 3 * 4; ++i) CHECK(std::abs(base[i] - moved[i]) <= 1e-12);

  AttentionMask bad = AttentionMask::full(2, 2);
  bad.set(1, 0, false);
  bad.set(1, 1, false);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("self-attention is permutation equivariant without a mask") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(7);
  MultiHeadAttention mha(8, 8, 2, init);
  std::mt19937_64 rng(8);
  const auto rows = lfnt::testing::random_values(5 * 8, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted(rows.size());
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j) permuted[i * 8 + j] = rows[perm[i] * 8 + j];
  Tensor a = Tensor::from_values({5, 8}, rows), b = Tensor::from_values({5, 8}, permuted);
  const auto ya = mha(a, a, nullptr).values(), yb = mha(b, b, nullptr).values();
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(yb[i * 8 + j] - ya[perm[i] * 8 + j]) <= 1e-12);
}

TEST_CASE("transformer cross-attention with a zero output projection is a no-op") {
  PrecisionScope p64(DType::kF64);
  BlockConfig cfg{8, 2, 16, 3, 0.0};
  ParamInit init_a(9), init_b(10);
  TransformerLayer plain(cfg, 0, init_a);
  TransformerLayer crossed(cfg, 6, init_b);
  auto src = named_params(plain);
  for (auto& [name, t] : named_params(crossed)) {
    if (auto it = src.find(name); it != src.end()) t.assign(it->second.values());
  }
  crossed.cross_attn.output.zero();
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({4, 8}, rng, false), ctx = random_tensor({3, 6}, rng, false);
  const auto mask = AttentionMask::causal(4);
  CHECK(max_abs_diff(plain(x, mask, nullptr).values(), crossed(x, mask, &ctx).values()) <= 1e-14);
  CHECK_THROWS_AS(crossed(x, mask, nullptr), ShapeError);
  CHECK_THROWS_AS(plain(Tensor::zeros({0, 8}), AttentionMask::full(0, 0), nullptr), ShapeError);
}

TEST_CASE("conformer with zeroed residual branches reduces to layer norm") {
  PrecisionScope p64(DType::kF64);
  BlockConfig cfg{8, 2, 16, 3, 0.0};
  ParamInit init(12);
  ConformerLayer layer(cfg, init);
  layer.ff1.out.zero();
  layer.ff2.out.zero();
  layer.att.output.zero();
  layer.pointwise_out.zero();
  std::mt19937_64 rng(13);
  Tensor h = random_tensor({6, 8}, rng, false);
  const auto expect = layer_norm(h, Tensor::full({8}, 1.0), Tensor::zeros({8})).values();
  CHECK(max_abs_diff(layer(h, nullptr).values(), expect) <= 1e-12);
  // Shorter than the kernel still works.
  CHECK(layer(random_tensor({1, 8}, rng, false), nullptr).rows() == 1);
}

TEST_CASE("lstm single step matches the gate equations") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(14);
  Lstm lstm(3, 2, 1, init);
  std::mt19937_64 rng(15);
  auto b = lfnt::testing::random_values(8, rng);
  lstm.layers[0].bias.assign(b);
  Tensor x = random_tensor({2, 3}, rng, false);
  const auto y = lstm(x).values();
  const auto xv = x.values(), W = lstm.layers[0].input_weight.values(), R = lstm.layers[0].hidden_weight.values();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> h(2, 0.0), c(2, 0.0);
  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<double> z(8);
    for (std::size_t g = 0; g < 8; ++g) {
      z[g] = b[g];
      for (std::size_t k = 0; k < 3; ++k) z[g] += xv[t * 3 + k] * W[k * 8 + g];
      for (std::size_t k = 0; k < 2; ++k) z[g] += h[k] * R[k * 8 + g];
    }
    for (std::size_t j = 0; j < 2; ++j) {
      c[j] = sig(z[2 + j]) * c[j] + sig(z[j]) * std::tanh(z[4 + j]);
      h[j] = sig(z[6 + j]) * std::tanh(c[j]);
      CHECK(std::abs(y[t * 2 + j] - h[j]) <= 1e-12);
    }
  }
}

TEST_CASE("lstm with zero weights outputs zeros") {
  PrecisionScope p64(DType::kF64);
  ParamInit init(22);
  Lstm lstm(3, 4, 2, init);
  lstm.visit("lstm", [](const std::string&, Tensor& t) { t.assign(std::vector<double>(t.numel(), 0.0)); });
  std::mt19937_64 rng(23);
  for (double v : lstm(random_tensor({5, 3}, rng, false)).values()) CHECK(v == 0.0);
}

TEST_CASE("conformer masking leaves frames beyond the conv receptive field untouched") {
  PrecisionScope p64(DType::kF64);
  BlockConfig cfg{8, 2, 16, 5, 0.0};
  ParamInit init(24);
  ConformerLayer layer(cfg, init);
  std::mt19937_64 rng(25);
  const std::size_t T = 12, j = 6, reach = cfg.conv_kernel / 2;
  Tensor x = random_tensor({T, 8}, rng, false);
  auto xv = x.values();
  const auto bump = lfnt::testing::random_values(8, rng);
  for (std::size_t d = 0; d < 8; ++d) xv[j * 8 + d] += bump[d];
  Tensor perturbed = Tensor::from_values({T, 8}, xv);
  auto mask = AttentionMask::full(T, T);
  for (std::size_t q = 0; q < T; ++q) mask.set(q, j, false);
  const auto a = layer(x, &mask).values(), b = layer(perturbed, &mask).values();
  for (std::size_t t = 0; t < T; ++t) {
    double diff = 0.0;
    for (std::size_t d = 0; d < 8; ++d) diff = std::max(diff, std::abs(a[t * 8 + d] - b[t * 8 + d]));
    const std::size_t dist = t > j ? t - j : j - t;
    if (dist > reach) {
      CHECK(diff == 0.0);
    } else {
      CHECK(diff > 1e-6);  // the convolution still mixes frame j locally
    }
  }
}

TEST_CASE("subsampler output lengths") {
  ParamInit init(16);
  for (std::size_t factor : {1u, 2u, 4u}) {
    Subsampler sub(5, 8, factor, init);
    for (std::size_t T : {4u, 5u, 7u, 16u}) {
      Tensor y = sub(Tensor::zeros({T, 5}));
      CHECK(y.rows() == sub.output_length(T));
      CHECK(y.rows() == (T + factor - 1) / factor);
      CHECK(y.cols() == 8);
    }
  }
  Subsampler four(5, 8, 4, init);
  CHECK_THROWS_AS(four(Tensor::zeros({3, 5})), ShapeError);
  CHECK_THROWS_AS(Subsampler(5, 8, 3, init), ShapeError);
}

TEST_CASE("positional encoding is continuous across negative positions") {
  const auto a = positional_encoding(6, 8, -3, DType::kF64).values();
  const auto b = positional_encoding(3, 8, 0, DType::kF64).values();
  for (std::size_t i = 0; i < 3 * 8; ++i) CHECK(a[3 * 8 + i] == doctest::Approx(b[i]).epsilon(1e-15));
  CHECK(b[0] == 0.0);
  CHECK(b[1] == 1.0);
}

TEST_CASE("block gradients match finite differences") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(17);
  BlockConfig cfg{4, 2, 6, 3, 0.0};
  GradCheckOptions opts;
  opts.max_entries_per_param = 6;
  // Central differences through several composed sublayers carry ~1e-11 noise.
  opts.abs_floor = 1e-5;

  SUBCASE("transformer with cross-attention") {
    ParamInit init(18);
    TransformerLayer layer(cfg, 3, init);
    Tensor x = random_tensor({3, 4}, rng), ctx = random_tensor({2, 3}, rng);
    auto params = params_of(layer);
    params.push_back(x);
    params.push_back(ctx);
    const auto mask = AttentionMask::causal(3);
    auto report = grad_check([&] { return random_projection(layer(x, mask, &ctx), 1); }, params, opts);
    CHECK(report.max_rel_error <= 1e-5);
  }
  SUBCASE("conformer") {
    ParamInit init(19);
    ConformerLayer layer(cfg, init);
    Tensor x = random_tensor({4, 4}, rng);
    auto params = params_of(layer);
    params.push_back(x);
    auto report = grad_check([&] { return random_projection(layer(x, nullptr), 2); }, params, opts);
    CHECK(report.max_rel_error <= 1e-5);
  }
  SUBCASE("two-layer lstm") {
    ParamInit init(20);
    Lstm lstm(3, 2, 2, init);
    Tensor x = random_tensor({3, 3}, rng);
    auto params = params_of(lstm);
    params.push_back(x);
    auto report = grad_check([&] { return random_projection(lstm(x), 3); }, params, opts);
    CHECK(report.max_rel_error <= 1e-5);
  }
  SUBCASE("subsampler") {
    ParamInit init(21);
    Subsampler sub(3, 4, 4, init);
    Tensor x = random_tensor({9, 3}, rng);
    auto params = params_of(sub);
    params.push_back(x);
    auto report = grad_check([&] { return random_projection(sub(x), 4); }, params, opts);
    CHECK(report.max_rel_error <= 1e-5);
  }
}
