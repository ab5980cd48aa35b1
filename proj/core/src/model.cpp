// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/model.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "config_util.hpp"
#include "longfnt/ops.hpp"

namespace lfnt {

namespace {

using detail::derive_seed;
using detail::parse_bool;
using detail::parse_double;
using detail::parse_size;

enum Component : std::uint64_t { kEncoder = 1, kPredictor, kVocab, kCtc, kContext, kSentence, kCross };

}  // namespace

// -- config ----------------------------------------------------------------------------

const char* to_string(Architecture a) { return a == Architecture::kCT ? "ct" : "mfnt"; }

const char* to_string(SentenceMode m) {
  switch (m) {
    case SentenceMode::kOutputAdd: return "output_add";
    case SentenceMode::kPrelinearConcat: return "prelinear_concat";
    case SentenceMode::kBoth: return "both";
    default: return "none";
  }
}

const char* to_string(ContextMode m) { return m == ContextMode::kJoint ? "joint" : "frozen_external"; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ShapeError("model_config", msg); };
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (lambda_lm < 0.0 || lambda_ctc < 0.0) fail("lambda weights must be >= 0");
  if (subsample != 1 && subsample != 2 && subsample != 4) fail("subsample must be 1, 2 or 4");
  if (feature_dim == 0 || model_dim == 0 || joint_dim == 0 || predictor_dim == 0) fail("dimensions must be > 0");
  if (predictor_layers == 0) fail("predictor_layers must be >= 1");
  block().validate();
  if (longform.n_text > 4 || longform.n_speech > 4) fail("history windows are limited to 0..4");
  if (longform.text_active()) {
    if (longform.context_mode == ContextMode::kJoint && longform.context_dim % heads != 0) {
      fail("longform.context_dim must be divisible by model.heads");
    }
  }
}

std::map<std::string, std::string> model_config_entries(const ModelConfig& c) {
  auto num = [](auto v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  const auto& l = c.longform;
  return {
      {"model.architecture", to_string(c.architecture)},
      {"model.vocab_size", num(c.vocab_size)},
      {"model.feature_dim", num(c.feature_dim)},
      {"model.subsample", num(c.subsample)},
      {"model.dim", num(c.model_dim)},
      {"model.heads", num(c.heads)},
      {"model.ffn_dim", num(c.ffn_dim)},
      {"model.conv_kernel", num(c.conv_kernel)},
      {"model.encoder_layers", num(c.encoder_layers)},
      {"model.predictor_dim", num(c.predictor_dim)},
      {"model.predictor_layers", num(c.predictor_layers)},
      {"model.vocab_layers", num(c.vocab_layers)},
      {"model.joint_dim", num(c.joint_dim)},
      {"model.lambda_lm", num(c.lambda_lm)},
      {"model.lambda_ctc", num(c.lambda_ctc)},
      {"model.dropout", num(c.dropout)},
      {"model.seed", num(c.seed)},
      {"longform.n_text", num(l.n_text)},
      {"longform.n_speech", num(l.n_speech)},
      {"longform.sentence_mode", to_string(l.sentence_mode)},
      {"longform.token_level", l.token_level ? "true" : "false"},
      {"longform.context_mode", to_string(l.context_mode)},
      {"longform.context_file", l.context_file},
      {"longform.context_dim", num(l.context_dim)},
      {"longform.context_layers", num(l.context_layers)},
      {"longform.projection_dim", num(l.projection_dim)},
      {"longform.renormalize", l.renormalize ? "true" : "false"},
  };
}


std::vector<std::string> apply_model_config(const std::map<std::string, std::string>& entries,
                                            ModelConfig& c) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size_field = [](std::size_t& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = parse_size(k, v); };
  };
  auto double_field = [](double& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = parse_double(k, v); };
  };
  auto& l = c.longform;
  const std::map<std::string, Setter> setters{
      {"model.architecture",
       [&](const std::string& k, const std::string& v) {
         if (v == "ct") c.architecture = Architecture::kCT;
         else if (v == "mfnt") c.architecture = Architecture::kMFNT;
         else throw ShapeError("config", k + ": expected ct|mfnt, got '" + v + "'");
       }},
      {"model.vocab_size", size_field(c.vocab_size)},
      {"model.feature_dim", size_field(c.feature_dim)},
      {"model.subsample", size_field(c.subsample)},
      {"model.dim", size_field(c.model_dim)},
      {"model.heads", size_field(c.heads)},
      {"model.ffn_dim", size_field(c.ffn_dim)},
      {"model.conv_kernel", size_field(c.conv_kernel)},
      {"model.encoder_layers", size_field(c.encoder_layers)},
      {"model.predictor_dim", size_field(c.predictor_dim)},
      {"model.predictor_layers", size_field(c.predictor_layers)},
      {"model.vocab_layers", size_field(c.vocab_layers)},
      {"model.joint_dim", size_field(c.joint_dim)},
      {"model.lambda_lm", double_field(c.lambda_lm)},
      {"model.lambda_ctc", double_field(c.lambda_ctc)},
      {"model.dropout", double_field(c.dropout)},
      {"model.seed", [&](const std::string& k, const std::string& v) { c.seed = detail::parse_u64(k, v); }},
      {"longform.n_text", size_field(l.n_text)},
      {"longform.n_speech", size_field(l.n_speech)},
      {"longform.sentence_mode",
       [&](const std::string& k, const std::string& v) {
         if (v == "none") l.sentence_mode = SentenceMode::kNone;
         else if (v == "output_add") l.sentence_mode = SentenceMode::kOutputAdd;
         else if (v == "prelinear_concat") l.sentence_mode = SentenceMode::kPrelinearConcat;
         else if (v == "both") l.sentence_mode = SentenceMode::kBoth;
         else throw ShapeError("config", k + ": expected none|output_add|prelinear_concat|both, got '" + v + "'");
       }},
      {"longform.token_level", [&](const std::string& k, const std::string& v) { l.token_level = parse_bool(k, v); }},
      {"longform.context_mode",
       [&](const std::string& k, const std::string& v) {
         if (v == "joint") l.context_mode = ContextMode::kJoint;
         else if (v == "frozen_external") l.context_mode = ContextMode::kFrozenExternal;
         else throw ShapeError("config", k + ": expected joint|frozen_external, got '" + v + "'");
       }},
      {"longform.context_file", [&](const std::string&, const std::string& v) { l.context_file = v; }},
      {"longform.context_dim", size_field(l.context_dim)},
      {"longform.context_layers", size_field(l.context_layers)},
      {"longform.projection_dim", size_field(l.projection_dim)},
      {"longform.renormalize", [&](const std::string& k, const std::string& v) { l.renormalize = parse_bool(k, v); }},
  };
  std::vector<std::string> unknown;
  for (const auto& [k, v] : entries) {
    if (auto it = setters.find(k); it != setters.end()) {
      it->second(k, v);
    } else if (k.rfind("model.", 0) == 0 || k.rfind("longform.", 0) == 0) {
      unknown.push_back(k);
    }
  }
  return unknown;
}

// -- construction ------------------------------------------------------------------------

FntModel::FntModel(const ModelConfig& config) : FntModel(config, nullptr) {}

FntModel::FntModel(const ModelConfig& config, std::shared_ptr<const ContextTable> frozen_table)
    : config_(config), dtype_(default_dtype()) {
  config_.validate();
  const auto& c = config_;
  const std::size_t V = c.vocab_size;
  const BlockConfig block = c.block();

  ParamInit enc_init(derive_seed(c.seed, kEncoder));
  subsampler_ = Subsampler(c.feature_dim, c.model_dim, c.subsample, enc_init);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) encoder_.emplace_back(block, enc_init);

  ParamInit pred_init(derive_seed(c.seed, kPredictor));
  pred_embedding_ = pred_init.normal({V + 1, c.predictor_dim}, 1.0);
  pred_lstm_ = Lstm(c.predictor_dim, c.predictor_dim, c.predictor_layers, pred_init);
  joint_encoder_ = Linear(c.model_dim, c.joint_dim, pred_init);
  joint_predictor_ = Linear(c.predictor_dim, c.joint_dim, pred_init, false);
  const bool ct = c.architecture == Architecture::kCT;
  joint_output_ = Linear(c.joint_dim, ct ? V + 1 : 1, pred_init);
  if (ct) return;

  ParamInit ctc_init(derive_seed(c.seed, kCtc));
  ctc_proj_ = Linear(c.model_dim, V + 1, ctc_init);
  beta_ = ParamInit::constant({1}, 1.0);

  ParamInit vocab_init(derive_seed(c.seed, kVocab));
  vocab_embedding_ = vocab_init.normal({V + 1, c.model_dim}, 1.0);
  for (std::size_t l = 0; l < c.vocab_layers; ++l) vocab_layers_.emplace_back(block, 0, vocab_init);
  vocab_norm_ = LayerNorm(c.model_dim);
  vocab_out_ = Linear(c.model_dim, V + 1, vocab_init);

  const auto& lf = c.longform;
  if (!lf.text_active()) return;
  if (lf.context_mode == ContextMode::kFrozenExternal) {
    if (!frozen_table) {
      if (lf.context_file.empty()) throw ShapeError("model", "frozen_external context needs longform.context_file");
      frozen_table = std::make_shared<const ContextTable>(read_context_table(lf.context_file));
    }
    context_encoder_ = ContextEncoder(V, std::move(frozen_table));
  } else {
    ParamInit ctx_init(derive_seed(c.seed, kContext));
    BlockConfig ctx_block{lf.context_dim, c.heads, c.ffn_dim, c.conv_kernel, c.dropout};
    context_encoder_ = ContextEncoder(V, ctx_block, lf.context_layers, ctx_init);
  }
  const std::size_t d_ctx = context_encoder_.dim();

  if (lf.sentence_mode != SentenceMode::kNone) {
    ParamInit sent_init(derive_seed(c.seed, kSentence));
    sentence_add_ = Linear(2 * d_ctx, V + 1, sent_init);
    sentence_add_.zero();
    sentence_projection_ = Linear(2 * d_ctx, lf.projection_dim, sent_init);
    sentence_concat_weight_ = ParamInit::zeros({lf.projection_dim, V + 1});
  }
  if (lf.token_level) {
    ParamInit cross_init(derive_seed(c.seed, kCross));
    for (auto& layer : vocab_layers_) {
      layer.has_cross = true;
      layer.norm_cross = LayerNorm(c.model_dim);
      layer.cross_attn = MultiHeadAttention(c.model_dim, d_ctx, c.heads, cross_init);
      layer.cross_attn.output.zero();
    }
  }
}

void FntModel::visit(const ParamVisitor& fn) {
  subsampler_.visit("encoder.subsample", fn);
  for (std::size_t l = 0; l < encoder_.size(); ++l) encoder_[l].visit("encoder.layer" + std::to_string(l), fn);
  const bool ct = config_.architecture == Architecture::kCT;
  const std::string pred = ct ? "predictor" : "blank";
  fn(pred + ".embedding", pred_embedding_);
  pred_lstm_.visit(pred + ".lstm", fn);
  joint_encoder_.visit("joint.encoder", fn);
  joint_predictor_.visit("joint.predictor", fn);
  joint_output_.visit("joint.output", fn);
  if (ct) return;
  ctc_proj_.visit("ctc.proj", fn);
  fn("fusion.beta", beta_);
  fn("vocab.embedding", vocab_embedding_);
  for (std::size_t l = 0; l < vocab_layers_.size(); ++l) vocab_layers_[l].visit("vocab.layer" + std::to_string(l), fn);
  vocab_norm_.visit("vocab.norm", fn);
  vocab_out_.visit("vocab.output", fn);
  if (!config_.longform.text_active()) return;
  context_encoder_.visit("context", fn);
  if (config_.longform.sentence_mode != SentenceMode::kNone) {
    sentence_add_.visit("sentence.add", fn);
    sentence_projection_.visit("sentence.projection", fn);
    fn("sentence.output_context.weight", sentence_concat_weight_);
  }
}

std::vector<std::pair<std::string, Tensor>> FntModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  visit([&](const std::string& name, Tensor& t) { out.emplace_back(name, t); });
  return out;
}

// -- encoder -----------------------------------------------------------------------------

Tensor FntModel::features_tensor(const FeatureMatrix& x) const {
  if (x.dims != config_.feature_dim) {
    throw ShapeError("encode", Shape{x.frames, x.dims}, Shape{x.frames, config_.feature_dim});
  }
  std::vector<double> v(x.data.begin(), x.data.end());
  return Tensor::from_values({x.frames, x.dims}, v);
}

Tensor FntModel::run_encoder(Tensor x, const AttentionMask* mask, DropoutRng rng) const {
  for (const auto& layer : encoder_) x = layer(x, mask, rng);
  return x;
}

Tensor FntModel::encode(const FeatureMatrix& x, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  Tensor h = add_positional_encoding(subsampler_(features_tensor(x)), 0);
  return run_encoder(h, nullptr, rng);
}

Tensor FntModel::encode(const FeatureMatrix& x, const std::vector<HistoryUtterance>& history,
                        bool block_history, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  std::vector<const FeatureMatrix*> window;
  const std::size_t n = config_.longform.n_speech;
  const std::size_t first = history.size() > n ? history.size() - n : 0;
  for (std::size_t i = first; i < history.size(); ++i) {
    if (history[i].features) window.push_back(history[i].features.get());
  }
  if (window.empty()) return encode(x, rng);

  std::vector<Tensor> parts;
  std::size_t hist_rows = 0;
  for (const FeatureMatrix* f : window) {
    parts.push_back(subsampler_(features_tensor(*f)));
    hist_rows += parts.back().rows();
  }
  parts.push_back(subsampler_(features_tensor(x)));
  const std::size_t cur_rows = parts.back().rows();
  Tensor h = add_positional_encoding(concat_rows(parts), -static_cast<std::ptrdiff_t>(hist_rows));
  const std::size_t total = hist_rows + cur_rows;
  AttentionMask mask = AttentionMask::full(total, total);
  if (block_history) {
    for (std::size_t q = hist_rows; q < total; ++q)
      for (std::size_t k = 0; k < hist_rows; ++k) mask.set(q, k, false);
  }
  h = run_encoder(h, block_history ? &mask : nullptr, rng);
  return slice_rows(h, hist_rows, total);
}

Tensor FntModel::ctc_projection(const Tensor& h) const {
  PrecisionScope scope(dtype_);
  if (config_.architecture == Architecture::kCT) throw ShapeError("ctc_projection", "C-T model has no CTC branch");
  return log_softmax(ctc_proj_(h));
}

// -- predictors ----------------------------------------------------------------------------

Tensor FntModel::predictor_inputs(const LabelSequence& y) const {
  std::vector<std::int64_t> ids{kBlank};
  for (auto v : y) {
    if (v <= 0 || static_cast<std::size_t>(v) > config_.vocab_size) {
      throw ShapeError("predictor", "label " + std::to_string(v) + " outside 1.." + std::to_string(config_.vocab_size));
    }
    ids.push_back(v);
  }
  return embedding(pred_embedding_, ids);
}

Tensor FntModel::blank_predictor(const LabelSequence& y) const {
  return joint_predictor_(pred_lstm_(predictor_inputs(y)));
}

Tensor FntModel::context_embeddings(const std::vector<HistoryUtterance>& history, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  if (!config_.longform.text_active()) throw ShapeError("context_embeddings", "text history is not enabled");
  return context_encoder_(join_history(history, config_.longform.n_text, context_encoder_.separator()), rng);
}

Tensor FntModel::vocab_hidden(const LabelSequence& y, const Tensor& context, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  std::vector<std::int64_t> ids{kBlank};
  ids.insert(ids.end(), y.begin(), y.end());
  for (auto v : y) {
    if (v <= 0 || static_cast<std::size_t>(v) > config_.vocab_size) {
      throw ShapeError("vocab_predictor", "label " + std::to_string(v) + " out of range");
    }
  }
  Tensor x = add_positional_encoding(embedding(vocab_embedding_, ids), 0);
  const auto mask = AttentionMask::causal(ids.size());
  const bool cross = config_.longform.text_active() && config_.longform.token_level;
  for (const auto& layer : vocab_layers_) x = layer(x, mask, cross ? &context : nullptr, rng);
  return vocab_norm_(x);
}

Tensor FntModel::vocab_output(const Tensor& p, const Tensor& pooled) const {
  PrecisionScope scope(dtype_);
  const auto mode = config_.longform.text_active() ? config_.longform.sentence_mode : SentenceMode::kNone;
  Tensor logits = vocab_out_(relu(p));
  if (mode == SentenceMode::kPrelinearConcat || mode == SentenceMode::kBoth) {
    // Linear^V over [p ; Projection(c~)] split into its two row blocks.
    Tensor extra = linear(relu(sentence_projection_(pooled)), sentence_concat_weight_, Tensor());
    logits = add_row(logits, extra);
  }
  Tensor z = log_softmax(logits);
  if (mode == SentenceMode::kOutputAdd || mode == SentenceMode::kBoth) {
    z = add_row(z, sentence_add_(pooled));
    if (config_.longform.renormalize) z = log_softmax(z);
  }
  return z;
}

Tensor FntModel::vocab_predictor(const LabelSequence& y, const Tensor& context, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  if (config_.architecture == Architecture::kCT) throw ShapeError("vocab_predictor", "C-T model has no LM branch");
  const bool text = config_.longform.text_active();
  if (text && !context.defined()) throw ShapeError("vocab_predictor", "text history enabled but no context given");
  Tensor pooled;
  if (text && config_.longform.sentence_mode != SentenceMode::kNone) pooled = mean_std_pool(context);
  return vocab_output(vocab_hidden(y, context, rng), pooled);
}

// -- lattice --------------------------------------------------------------------------------

Tensor FntModel::mfnt_lattice(const Tensor& enc_joint, const Tensor& ctc_vocab, const Tensor& pred,
                              const Tensor& lm) const {
  const std::size_t V = config_.vocab_size;
  Tensor z_blank = joint_output_(tanh(pair_add(enc_joint, pred)));
  Tensor z_vocab = pair_add(ctc_vocab, mul_scalar(slice_cols(lm, 1, V + 1), beta_));
  std::vector<Tensor> parts{z_blank, z_vocab};
  return log_softmax(concat_cols(parts));
}

Tensor FntModel::ct_lattice(const Tensor& enc_joint, const Tensor& pred) const {
  return log_softmax(joint_output_(tanh(pair_add(enc_joint, pred))));
}

FactorizedScores FntModel::scores(const FeatureMatrix& x, const LabelSequence& y,
                                  const std::vector<HistoryUtterance>& history, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  FactorizedScores s;
  s.encoder = encode(x, history, false, rng);
  s.frames = s.encoder.rows();
  const Tensor enc_joint = joint_encoder_(s.encoder);
  const Tensor pred = blank_predictor(y);
  if (config_.architecture == Architecture::kCT) {
    s.log_posterior = ct_lattice(enc_joint, pred);
    return s;
  }
  const std::size_t V = config_.vocab_size;
  s.ctc = ctc_projection(s.encoder);
  Tensor context;
  if (config_.longform.text_active()) context = context_embeddings(history, rng);
  s.lm = vocab_predictor(y, context, rng);
  s.blank = joint_output_(tanh(pair_add(enc_joint, pred)));
  Tensor z_vocab = pair_add(slice_cols(s.ctc, 1, V + 1), mul_scalar(slice_cols(s.lm, 1, V + 1), beta_));
  std::vector<Tensor> parts{s.blank, z_vocab};
  s.log_posterior = log_softmax(concat_cols(parts));
  return s;
}

LossBreakdown FntModel::loss(const FeatureMatrix& x, const LabelSequence& y,
                             const std::vector<HistoryUtterance>& history, DropoutRng rng) const {
  PrecisionScope scope(dtype_);
  const FactorizedScores s = scores(x, y, history, rng);
  LossBreakdown out;
  Tensor rnnt = transducer_loss(s.log_posterior, s.frames, y);
  out.transducer = rnnt.item();
  out.total = rnnt;
  if (config_.architecture == Architecture::kCT) return out;
  if (config_.lambda_lm > 0.0) {
    Tensor lm = lm_loss(s.lm, y, kBlank);
    out.lm = lm.item();
    out.total = add(out.total, scale(lm, config_.lambda_lm));
  } else {
    out.lm = lm_loss(s.lm.detach(), y, kBlank).item();
  }
  Tensor ctc = ctc_loss(config_.lambda_ctc > 0.0 ? s.ctc : s.ctc.detach(), y);
  out.ctc = ctc.item();
  out.ctc_feasible = std::isfinite(out.ctc);
  if (config_.lambda_ctc > 0.0 && out.ctc_feasible) out.total = add(out.total, scale(ctc, config_.lambda_ctc));
  return out;
}

// -- decoding -------------------------------------------------------------------------------

DecodeContext FntModel::prepare(const FeatureMatrix& x, const std::vector<HistoryUtterance>& history) const {
  PrecisionScope scope(dtype_);
  NoGradScope no_grad;
  DecodeContext ctx;
  const Tensor h = encode(x, history, false, nullptr);
  ctx.frames = h.rows();
  ctx.encoder_joint = joint_encoder_(h);
  if (config_.architecture == Architecture::kCT) return ctx;
  ctx.ctc_vocab = slice_cols(ctc_projection(h), 1, config_.vocab_size + 1);
  if (config_.longform.text_active()) {
    ctx.context = context_embeddings(history, nullptr);
    if (config_.longform.sentence_mode != SentenceMode::kNone) ctx.pooled = mean_std_pool(ctx.context);
  }
  return ctx;
}

std::vector<double> FntModel::prefix_log_probs(const DecodeContext& ctx, const LabelSequence& prefix) const {
  PrecisionScope scope(dtype_);
  NoGradScope no_grad;
  const Tensor pred_all = blank_predictor(prefix);
  const Tensor pred = slice_rows(pred_all, prefix.size(), prefix.size() + 1);
  if (config_.architecture == Architecture::kCT) return ct_lattice(ctx.encoder_joint, pred).values();
  const Tensor lm_all = vocab_output(vocab_hidden(prefix, ctx.context, nullptr), ctx.pooled);
  const Tensor lm = slice_rows(lm_all, prefix.size(), prefix.size() + 1);
  return mfnt_lattice(ctx.encoder_joint, ctx.ctc_vocab, pred, lm).values();
}

}  // namespace lfnt
