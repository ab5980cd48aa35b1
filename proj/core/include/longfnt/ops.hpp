// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "longfnt/tensor.hpp"

// Differentiable primitives. Matrices are rank-2 row-major [rows x cols];
// a rank-1 tensor of length n is treated as a single row where noted.
namespace lfnt {

// -- linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x * W + b, with W [in x out] and optional b [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// -- elementwise --------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a * s for a one-element tensor s.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// Adds the row vector r [cols] to every row of x.
Tensor add_row(const Tensor& x, const Tensor& r);
/// out[i * L + j] = a[i] + b[j] for a [T x m], b [L x m]; result [(T*L) x m].
Tensor pair_add(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor swish(const Tensor& x);
/// log(exp(a) + exp(b)), elementwise.
Tensor logaddexp(const Tensor& a, const Tensor& b);

// -- structure ----------------------------------------------------------------
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// Element at a flat index, as a one-element tensor.
Tensor pick(const Tensor& x, std::size_t flat_index);
/// Rows of `table` selected by ids; result [ids.size() x cols].
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids);
/// Inverted dropout. Identity when rate == 0 or grad recording is off.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

// -- reductions & normalizers -------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Softmax along `axis` (last axis by default). NaN input raises NumericError.
Tensor softmax(const Tensor& x, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);
/// Row softmax where entries with mask == 0 get exactly zero weight.
/// Every row needs at least one unmasked entry.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// [L x d] -> [2d]: column means followed by sqrt(population variance + eps).
Tensor mean_std_pool(const Tensor& c, double eps = 1e-5);
/// Mean negative log-likelihood of targets under row log-distributions.
Tensor nll_mean(const Tensor& logprobs, std::span<const std::int64_t> targets);

// -- convolution ----------------------------------------------------------------
/// Per-channel conv over time. x [T x C], w [K x C], b [C]; zero padded so
/// the output has T rows. K must be odd.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& b);
/// Full conv over time with stride. x [T x Cin], w [(K*Cin) x Cout], b [Cout];
/// padding (K-1)/2, output ceil(T/stride) rows. K must be odd.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t kernel,
              std::size_t stride);

}  // namespace lfnt
