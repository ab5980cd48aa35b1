// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/nn.hpp"

#include <cmath>
#include <string>

#include "longfnt/ops.hpp"

namespace lfnt {

AttentionMask AttentionMask::full(std::size_t queries, std::size_t keys) {
  return AttentionMask{queries, keys, std::vector<std::uint8_t>(queries * keys, 1)};
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m{length, length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t q = 0; q < length; ++q)
    for (std::size_t k = 0; k <= q; ++k) m.set(q, k, true);
  return m;
}

void AttentionMask::validate() const {
  if (allow.size() != queries * keys) {
    throw ShapeError("AttentionMask", Shape{queries, keys}, Shape{allow.size()});
  }
  for (std::size_t q = 0; q < queries; ++q) {
    bool any = false;
    for (std::size_t k = 0; k < keys && !any; ++k) any = allowed(q, k);
    if (!any) throw ShapeError("AttentionMask", "query row " + std::to_string(q) + " is fully masked");
  }
}

void BlockConfig::validate() const {
  if (heads == 0 || model_dim % heads != 0) {
    throw ShapeError("BlockConfig", "model_dim " + std::to_string(model_dim) +
                                        " not divisible by heads " + std::to_string(heads));
  }
  if (conv_kernel % 2 == 0) throw ShapeError("BlockConfig", "conv_kernel must be odd");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ShapeError("BlockConfig", "dropout_rate out of [0,1)");
}

Tensor ParamInit::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng_);
  return Tensor::from_values(std::move(shape), v, true);
}

Tensor ParamInit::xavier(std::size_t fan_in, std::size_t fan_out) {
  return uniform({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

Tensor ParamInit::normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng_);
  return Tensor::from_values(std::move(shape), v, true);
}

Tensor ParamInit::zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor ParamInit::constant(Shape shape, double value) {
  return Tensor::full(std::move(shape), value, true);
}

// -- Linear / LayerNorm -------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, ParamInit& init, bool with_bias)
    : weight(init.xavier(in, out)) {
  if (with_bias) bias = ParamInit::zeros({out});
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::zero() {
  std::vector<double> zw(weight.numel(), 0.0);
  weight.assign(zw);
  if (bias.defined()) {
    std::vector<double> zb(bias.numel(), 0.0);
    bias.assign(zb);
  }
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (bias.defined()) fn(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim)
    : gain(ParamInit::constant({dim}, 1.0)), bias(ParamInit::zeros({dim})) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".bias", bias);
}

// -- attention ------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t kv_dim, std::size_t heads,
                                       ParamInit& init)
    : heads(heads),
      dim(dim),
      query(dim, dim, init),
      key(kv_dim, dim, init),
      value(kv_dim, dim, init),
      output(dim, dim, init) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("MultiHeadAttention", "dim " + std::to_string(dim) + " not divisible by heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& q_in, const Tensor& kv_in,
                                      const AttentionMask* mask) const {
  if (mask && (mask->queries != q_in.rows() || mask->keys != kv_in.rows())) {
    throw ShapeError("multi_head_attention", Shape{mask->queries, mask->keys},
                     Shape{q_in.rows(), kv_in.rows()});
  }
  const Tensor q = query(q_in);
  const Tensor k = key(kv_in);
  const Tensor v = value(kv_in);
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * head_dim, e = b + head_dim;
    Tensor scores = scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt);
    Tensor weights = mask ? masked_softmax(scores, mask->allow) : softmax(scores);
    per_head.push_back(matmul(weights, slice_cols(v, b, e)));
  }
  Tensor merged = heads == 1 ? per_head[0] : concat_cols(per_head);
  return output(merged);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, ParamInit& init)
    : in(dim, hidden, init), out(hidden, dim, init) {}

Tensor FeedForward::operator()(const Tensor& x, DropoutRng rng, double rate) const {
  Tensor h = swish(in(x));
  if (rng) h = dropout(h, rate, *rng);
  return out(h);
}

void FeedForward::visit(const std::string& prefix, const ParamVisitor& fn) {
  in.visit(prefix + ".in", fn);
  out.visit(prefix + ".out", fn);
}

// -- transformer ----------------------------------------------------------------

TransformerLayer::TransformerLayer(const BlockConfig& cfg, std::size_t context_dim,
                                   ParamInit& init)
    : config(cfg),
      norm_self(cfg.model_dim),
      self_attn(cfg.model_dim, cfg.model_dim, cfg.heads, init),
      has_cross(context_dim > 0) {
  cfg.validate();
  if (has_cross) {
    norm_cross = LayerNorm(cfg.model_dim);
    cross_attn = MultiHeadAttention(cfg.model_dim, context_dim, cfg.heads, init);
  }
  norm_ffn = LayerNorm(cfg.model_dim);
  ffn = FeedForward(cfg.model_dim, cfg.ffn_dim, init);
}

Tensor TransformerLayer::operator()(const Tensor& x, const AttentionMask& mask,
                                    const Tensor* context, DropoutRng rng) const {
  if (x.rank() != 2 || x.rows() == 0) {
    throw ShapeError("transformer_layer", "input must be a non-empty sequence, got " + shape_str(x.shape()));
  }
  if (has_cross && (context == nullptr || !context->defined())) {
    throw ShapeError("transformer_layer", "layer has cross-attention but no context was given");
  }
  auto drop = [&](const Tensor& t) { return rng ? dropout(t, config.dropout_rate, *rng) : t; };
  Tensor h = norm_self(x);
  Tensor y = add(x, drop(self_attn(h, h, &mask)));
  if (has_cross) {
    y = add(y, drop(cross_attn(norm_cross(y), *context, nullptr)));
  }
  return add(y, drop(ffn(norm_ffn(y), rng, config.dropout_rate)));
}

void TransformerLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm_self.visit(prefix + ".norm_self", fn);
  self_attn.visit(prefix + ".self_attn", fn);
  if (has_cross) {
    norm_cross.visit(prefix + ".norm_cross", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
  }
  norm_ffn.visit(prefix + ".norm_ffn", fn);
  ffn.visit(prefix + ".ffn", fn);
}

// -- conformer ------------------------------------------------------------------

ConformerLayer::ConformerLayer(const BlockConfig& cfg, ParamInit& init)
    : config(cfg),
      norm_ff1(cfg.model_dim),
      ff1(cfg.model_dim, cfg.ffn_dim, init),
      norm_att(cfg.model_dim),
      att(cfg.model_dim, cfg.model_dim, cfg.heads, init),
      norm_conv(cfg.model_dim),
      pointwise_in(cfg.model_dim, 2 * cfg.model_dim, init),
      depthwise_weight(init.uniform({cfg.conv_kernel, cfg.model_dim},
                                    1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel)))),
      depthwise_bias(ParamInit::zeros({cfg.model_dim})),
      pointwise_out(cfg.model_dim, cfg.model_dim, init),
      norm_ff2(cfg.model_dim),
      ff2(cfg.model_dim, cfg.ffn_dim, init),
      norm_out(cfg.model_dim) {
  cfg.validate();
}

Tensor ConformerLayer::operator()(const Tensor& h, const AttentionMask* mask, DropoutRng rng) const {
  if (h.rank() != 2 || h.rows() == 0) {
    throw ShapeError("conformer_layer", "input must be a non-empty sequence, got " + shape_str(h.shape()));
  }
  if (h.cols() != config.model_dim) throw ShapeError("conformer_layer", h.shape(), Shape{h.rows(), config.model_dim});
  auto drop = [&](const Tensor& t) { return rng ? dropout(t, config.dropout_rate, *rng) : t; };
  const double rate = config.dropout_rate;

  Tensor x = add(h, scale(drop(ff1(norm_ff1(h), rng, rate)), 0.5));
  Tensor a = norm_att(x);
  x = add(x, drop(att(a, a, mask)));

  Tensor c = pointwise_in(norm_conv(x));
  const std::size_t d = config.model_dim;
  c = mul(slice_cols(c, 0, d), sigmoid(slice_cols(c, d, 2 * d)));
  c = swish(depthwise_conv1d(c, depthwise_weight, depthwise_bias));
  x = add(x, drop(pointwise_out(c)));

  x = add(x, scale(drop(ff2(norm_ff2(x), rng, rate)), 0.5));
  return norm_out(x);
}

void ConformerLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  norm_ff1.visit(prefix + ".norm_ff1", fn);
  ff1.visit(prefix + ".ff1", fn);
  norm_att.visit(prefix + ".norm_att", fn);
  att.visit(prefix + ".att", fn);
  norm_conv.visit(prefix + ".norm_conv", fn);
  pointwise_in.visit(prefix + ".pointwise_in", fn);
  fn(prefix + ".depthwise.weight", depthwise_weight);
  fn(prefix + ".depthwise.bias", depthwise_bias);
  pointwise_out.visit(prefix + ".pointwise_out", fn);
  norm_ff2.visit(prefix + ".norm_ff2", fn);
  ff2.visit(prefix + ".ff2", fn);
  norm_out.visit(prefix + ".norm_out", fn);
}

// -- LSTM -------------------------------------------------------------------------

Lstm::Lstm(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_layers, ParamInit& init)
    : hidden(hidden_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t in = l == 0 ? input_dim : hidden_dim;
    Layer layer{init.uniform({in, 4 * hidden_dim}, bound),
                init.uniform({hidden_dim, 4 * hidden_dim}, bound), ParamInit::zeros({4 * hidden_dim})};
    layers.push_back(std::move(layer));
  }
}

Tensor Lstm::operator()(const Tensor& x) const {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("lstm", "expected a non-empty sequence");
  const std::size_t H = hidden;
  Tensor seq = x;
  for (const auto& layer : layers) {
    const Tensor projected = linear(seq, layer.input_weight, layer.bias);  // [L x 4H]
    Tensor h, c;
    std::vector<Tensor> outputs;
    outputs.reserve(seq.rows());
    for (std::size_t t = 0; t < seq.rows(); ++t) {
      Tensor z = slice_rows(projected, t, t + 1);
      if (h.defined()) z = add(z, matmul(h, layer.hidden_weight));
      const Tensor i = sigmoid(slice_cols(z, 0, H));
      const Tensor f = sigmoid(slice_cols(z, H, 2 * H));
      const Tensor g = tanh(slice_cols(z, 2 * H, 3 * H));
      const Tensor o = sigmoid(slice_cols(z, 3 * H, 4 * H));
      c = c.defined() ? add(mul(f, c), mul(i, g)) : mul(i, g);
      h = mul(o, tanh(c));
      outputs.push_back(h);
    }
    seq = concat_rows(outputs);
  }
  return seq;
}

void Lstm::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    fn(p + ".input_weight", layers[l].input_weight);
    fn(p + ".hidden_weight", layers[l].hidden_weight);
    fn(p + ".bias", layers[l].bias);
  }
}

// -- subsampling ----------------------------------------------------------------

Subsampler::Subsampler(std::size_t feat_dim, std::size_t model_dim, std::size_t f, ParamInit& init)
    : factor(f) {
  if (f != 1 && f != 2 && f != 4) throw ShapeError("subsample", "factor must be 1, 2 or 4");
  std::size_t in = feat_dim;
  for (std::size_t s = 1; s < f; s *= 2) {
    conv_weights.push_back(init.xavier(3 * in, model_dim));
    conv_biases.push_back(ParamInit::zeros({model_dim}));
    in = model_dim;
  }
  project = Linear(in, model_dim, init);
}

Tensor Subsampler::operator()(const Tensor& features) const {
  if (features.rank() != 2 || features.rows() < factor) {
    throw ShapeError("subsample", "need at least " + std::to_string(factor) + " frames, got " +
                                      shape_str(features.shape()));
  }
  Tensor x = features;
  for (std::size_t s = 0; s < conv_weights.size(); ++s) {
    x = relu(conv1d(x, conv_weights[s], conv_biases[s], 3, 2));
  }
  return project(x);
}

void Subsampler::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t s = 0; s < conv_weights.size(); ++s) {
    fn(prefix + ".conv" + std::to_string(s) + ".weight", conv_weights[s]);
    fn(prefix + ".conv" + std::to_string(s) + ".bias", conv_biases[s]);
  }
  project.visit(prefix + ".project", fn);
}

Tensor positional_encoding(std::size_t length, std::size_t dim, std::ptrdiff_t first_position,
                           DType dtype) {
  std::vector<double> v(length * dim);
  for (std::size_t t = 0; t < length; ++t) {
    const double pos = static_cast<double>(first_position + static_cast<std::ptrdiff_t>(t));
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      v[t * dim + i] = std::sin(pos * freq);
      if (i + 1 < dim) v[t * dim + i + 1] = std::cos(pos * freq);
    }
  }
  PrecisionScope precision(dtype);
  return Tensor::from_values({length, dim}, v);
}

Tensor add_positional_encoding(const Tensor& x, std::ptrdiff_t first_position) {
  return add(x, positional_encoding(x.rows(), x.cols(), first_position, x.dtype()));
}

}  // namespace lfnt
