// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "longfnt/tensor.hpp"

namespace lfnt {

/// Boolean [queries x keys] visibility matrix; 1 = attendable.
struct AttentionMask {
  std::size_t queries = 0;
  std::size_t keys = 0;
  std::vector<std::uint8_t> allow;

  static AttentionMask full(std::size_t queries, std::size_t keys);
  /// Lower-triangular: query i sees keys 0..i.
  static AttentionMask causal(std::size_t length);

  bool allowed(std::size_t q, std::size_t k) const { return allow[q * keys + k] != 0; }
  void set(std::size_t q, std::size_t k, bool visible) { allow[q * keys + k] = visible ? 1 : 0; }
  /// Throws ShapeError if some query row has no attendable key.
  void validate() const;
};

struct BlockConfig {
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t conv_kernel = 5;
  double dropout_rate = 0.0;

  void validate() const;
};

/// Seeded parameter factory. Tensors take the thread's default dtype.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, double bound);
  /// Glorot-uniform for a [fan_in x fan_out] matrix.
  Tensor xavier(std::size_t fan_in, std::size_t fan_out);
  Tensor normal(Shape shape, double stddev);
  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, double value);

 private:
  std::mt19937_64 rng_;
};

/// Callback receiving (qualified name, parameter) pairs.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// Dropout source for a training forward pass; nullptr disables dropout.
using DropoutRng = std::mt19937_64*;

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], may be undefined

  Linear() = default;
  Linear(std::size_t in, std::size_t out, ParamInit& init, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  /// Zeroes weight and bias in place.
  void zero();
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Scaled dot-product attention with per-head loops. Keys/values may come
/// from a source with a different feature size (cross-attention).
struct MultiHeadAttention {
  std::size_t heads = 1;
  std::size_t dim = 0;
  Linear query, key, value, output;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t kv_dim, std::size_t heads, ParamInit& init);
  /// `mask` may be null for full visibility.
  Tensor operator()(const Tensor& q_in, const Tensor& kv_in, const AttentionMask* mask) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct FeedForward {
  Linear in, out;

  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, ParamInit& init);
  Tensor operator()(const Tensor& x, DropoutRng rng = nullptr, double rate = 0.0) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Pre-norm transformer layer: self-attention, optional cross-attention over
/// an external context, feed-forward; each sublayer is residual.
struct TransformerLayer {
  BlockConfig config;
  LayerNorm norm_self;
  MultiHeadAttention self_attn;
  bool has_cross = false;
  LayerNorm norm_cross;
  MultiHeadAttention cross_attn;
  LayerNorm norm_ffn;
  FeedForward ffn;

  TransformerLayer() = default;
  /// context_dim > 0 adds the cross-attention sublayer.
  TransformerLayer(const BlockConfig& config, std::size_t context_dim, ParamInit& init);
  Tensor operator()(const Tensor& x, const AttentionMask& mask, const Tensor* context,
                    DropoutRng rng = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Macaron conformer layer: half FFN, self-attention, convolution module
/// (pointwise+GLU, depthwise, swish, pointwise), half FFN, final norm.
struct ConformerLayer {
  BlockConfig config;
  LayerNorm norm_ff1;
  FeedForward ff1;
  LayerNorm norm_att;
  MultiHeadAttention att;
  LayerNorm norm_conv;
  Linear pointwise_in;  // d -> 2d, gated by GLU
  Tensor depthwise_weight;  // [kernel x d]
  Tensor depthwise_bias;    // [d]
  Linear pointwise_out;
  LayerNorm norm_ff2;
  FeedForward ff2;
  LayerNorm norm_out;

  ConformerLayer() = default;
  ConformerLayer(const BlockConfig& config, ParamInit& init);
  /// Sequences shorter than the kernel are zero padded.
  Tensor operator()(const Tensor& h, const AttentionMask* mask, DropoutRng rng = nullptr) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Stacked unidirectional LSTM, gate order (input, forget, cell, output).
struct Lstm {
  struct Layer {
    Tensor input_weight;   // [in x 4H]
    Tensor hidden_weight;  // [H x 4H]
    Tensor bias;           // [4H]
  };
  std::size_t hidden = 0;
  std::vector<Layer> layers;

  Lstm() = default;
  Lstm(std::size_t input_dim, std::size_t hidden, std::size_t num_layers, ParamInit& init);
  /// x [L x in] -> hidden states [L x H], zero initial state.
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Time reduction by 1, 2 or 4 via stride-2 convolutions, then a projection
/// to the model dimension. Output length ceil(T / factor).
struct Subsampler {
  std::size_t factor = 1;
  std::vector<Tensor> conv_weights;  // [(3*Cin) x C]
  std::vector<Tensor> conv_biases;
  Linear project;

  Subsampler() = default;
  Subsampler(std::size_t feat_dim, std::size_t model_dim, std::size_t factor, ParamInit& init);
  Tensor operator()(const Tensor& features) const;
  std::size_t output_length(std::size_t frames) const { return (frames + factor - 1) / factor; }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

/// Sinusoidal encodings for positions first, first+1, ...; positions may be
/// negative. Returned in the given dtype, no gradient.
Tensor positional_encoding(std::size_t length, std::size_t dim, std::ptrdiff_t first_position,
                           DType dtype);

/// x + positional_encoding(rows(x), cols(x), first_position).
Tensor add_positional_encoding(const Tensor& x, std::ptrdiff_t first_position);

}  // namespace lfnt
