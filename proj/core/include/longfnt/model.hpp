// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "longfnt/features.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/longform.hpp"
#include "longfnt/nn.hpp"
#include "longfnt/tensor.hpp"

namespace lfnt {

enum class Architecture : std::uint8_t { kCT, kMFNT };
enum class SentenceMode : std::uint8_t { kNone, kOutputAdd, kPrelinearConcat, kBoth };
enum class ContextMode : std::uint8_t { kJoint, kFrozenExternal };

struct LongformConfig {
  std::size_t n_text = 0;    // previous transcriptions seen by the predictor
  std::size_t n_speech = 0;  // previous utterances seen by the encoder
  SentenceMode sentence_mode = SentenceMode::kNone;
  bool token_level = false;
  ContextMode context_mode = ContextMode::kJoint;
  std::string context_file;  // frozen-external LFCE table
  std::size_t context_dim = 32;
  std::size_t context_layers = 1;
  std::size_t projection_dim = 16;  // Projection(c~) width for prelinear concat
  bool renormalize = true;          // log_softmax after output_add

  bool text_active() const { return n_text > 0 && (sentence_mode != SentenceMode::kNone || token_level); }
  bool speech_active() const { return n_speech > 0; }
};

struct ModelConfig {
  Architecture architecture = Architecture::kMFNT;
  std::size_t vocab_size = 16;  // V; labels are 1..V, 0 is blank
  std::size_t feature_dim = 16;
  std::size_t subsample = 2;
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t conv_kernel = 5;
  std::size_t encoder_layers = 2;
  std::size_t predictor_dim = 32;  // blank-branch (or C-T predictor) LSTM width
  std::size_t predictor_layers = 1;
  std::size_t vocab_layers = 2;  // Pred^V transformer depth, width model_dim
  std::size_t joint_dim = 32;
  double lambda_lm = 0.5;
  double lambda_ctc = 0.1;
  double dropout = 0.0;
  std::uint64_t seed = 1;
  LongformConfig longform;

  void validate() const;
  BlockConfig block() const { return {model_dim, heads, ffn_dim, conv_kernel, dropout}; }
};

/// Flat dotted-key view of a config, used for checkpoints and config files.
std::map<std::string, std::string> model_config_entries(const ModelConfig& cfg);
/// Applies recognised "model.*" / "longform.*" keys; returns unknown keys.
std::vector<std::string> apply_model_config(const std::map<std::string, std::string>& entries, ModelConfig& cfg);

const char* to_string(Architecture a);
const char* to_string(SentenceMode m);
const char* to_string(ContextMode m);

/// Every score of one (utterance, label sequence) pair. Lattice tensors are
/// [(T' * (U+1)) x ...] with row t*(U+1)+u.
struct FactorizedScores {
  std::size_t frames = 0;
  Tensor encoder;        // h, [T' x d]
  Tensor blank;          // z_B, [(T'(U+1)) x 1]; MFNT only
  Tensor ctc;            // z_V_t, [T' x (V+1)]; MFNT only
  Tensor lm;             // z_V_l, [(U+1) x (V+1)], column 0 = end of utterance; MFNT only
  Tensor log_posterior;  // log P_ASR, [(T'(U+1)) x (V+1)], blank at 0
};

struct LossBreakdown {
  Tensor total;
  double transducer = 0.0;
  double lm = 0.0;
  double ctc = 0.0;
  bool ctc_feasible = true;
};

/// Per-utterance state reused across decoding steps.
struct DecodeContext {
  std::size_t frames = 0;
  Tensor encoder_joint;  // [T' x J]
  Tensor ctc_vocab;      // [T' x V], MFNT
  Tensor context;        // C, when text history is active
  Tensor pooled;         // c~, when sentence-level integration is active
};

/// C-T baseline or M-FNT, optionally with long-form text/speech history.
class FntModel {
 public:
  /// Parameters take the calling thread's default dtype.
  explicit FntModel(const ModelConfig& config);
  FntModel(const ModelConfig& config, std::shared_ptr<const ContextTable> frozen_table);

  const ModelConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }

  void visit(const ParamVisitor& fn);
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  Tensor beta() const { return beta_; }

  /// h = conformer(positional(subsample(x))).
  Tensor encode(const FeatureMatrix& x, DropoutRng rng = nullptr) const;
  /// Long-form encoder: history utterances are subsampled separately and
  /// prepended; only the current frames are returned. `block_history`
  /// hides history keys from current-frame queries.
  Tensor encode(const FeatureMatrix& x, const std::vector<HistoryUtterance>& history,
                bool block_history = false, DropoutRng rng = nullptr) const;

  /// log_softmax(Proj(h)), [T' x (V+1)].
  Tensor ctc_projection(const Tensor& h) const;

  /// C for the text window of `history` (empty history -> no-history row).
  Tensor context_embeddings(const std::vector<HistoryUtterance>& history, DropoutRng rng = nullptr) const;

  /// z_V_l for the predictor input [0, y_1..y_L]; `context` may be undefined
  /// when text history is inactive.
  Tensor vocab_predictor(const LabelSequence& y, const Tensor& context, DropoutRng rng = nullptr) const;

  /// Pred-Encoder output p, [(L+1) x d].
  Tensor vocab_hidden(const LabelSequence& y, const Tensor& context, DropoutRng rng = nullptr) const;
  /// log_softmax(Linear^V(ReLU(p))) with sentence-level integration of the
  /// pooled context c~ (undefined when inactive).
  Tensor vocab_output(const Tensor& p, const Tensor& pooled) const;

  FactorizedScores scores(const FeatureMatrix& x, const LabelSequence& y,
                          const std::vector<HistoryUtterance>& history, DropoutRng rng = nullptr) const;
  LossBreakdown loss(const FeatureMatrix& x, const LabelSequence& y,
                     const std::vector<HistoryUtterance>& history, DropoutRng rng = nullptr) const;

  DecodeContext prepare(const FeatureMatrix& x, const std::vector<HistoryUtterance>& history) const;
  /// log P_ASR(. | t, prefix) for all frames, flat [T' x (V+1)].
  std::vector<double> prefix_log_probs(const DecodeContext& ctx, const LabelSequence& prefix) const;

 private:
  Tensor features_tensor(const FeatureMatrix& x) const;
  Tensor predictor_inputs(const LabelSequence& y) const;
  Tensor blank_predictor(const LabelSequence& y) const;
  Tensor run_encoder(Tensor x, const AttentionMask* mask, DropoutRng rng) const;
  // Pair-combined lattice for MFNT / CT given per-frame and per-prefix parts.
  Tensor mfnt_lattice(const Tensor& enc_joint, const Tensor& ctc_vocab, const Tensor& pred,
                      const Tensor& lm) const;
  Tensor ct_lattice(const Tensor& enc_joint, const Tensor& pred) const;

  ModelConfig config_;
  DType dtype_;

  Subsampler subsampler_;
  std::vector<ConformerLayer> encoder_;

  // Blank branch (MFNT) or the full predictor (CT).
  Tensor pred_embedding_;  // [(V+1) x E], row 0 = start symbol
  Lstm pred_lstm_;
  Linear joint_encoder_;    // d -> J
  Linear joint_predictor_;  // H -> J, no bias
  Linear joint_output_;     // J -> 1 (MFNT) or J -> V+1 (CT)

  // MFNT vocabulary side.
  Linear ctc_proj_;  // d -> V+1
  Tensor beta_;      // [1]
  Tensor vocab_embedding_;  // [(V+1) x d]
  std::vector<TransformerLayer> vocab_layers_;
  LayerNorm vocab_norm_;
  Linear vocab_out_;  // d -> V+1

  // Long-form text.
  ContextEncoder context_encoder_;
  Linear sentence_add_;         // 2*d_ctx -> V+1, zero-initialised
  Linear sentence_projection_;  // 2*d_ctx -> projection_dim
  Tensor sentence_concat_weight_;  // [projection_dim x (V+1)], zero-initialised
};

}  // namespace lfnt
