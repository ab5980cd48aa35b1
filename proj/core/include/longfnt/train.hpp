// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "longfnt/checkpoint.hpp"
#include "longfnt/config_file.hpp"
#include "longfnt/corpus.hpp"
#include "longfnt/features.hpp"
#include "longfnt/longform.hpp"
#include "longfnt/model.hpp"
#include "longfnt/optimizer.hpp"

namespace lfnt {

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  AdamConfig adam;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  bool spec_augment = false;
  SpecAugmentConfig augment;
  DType precision = DType::kF32;

  /// Command-line level checks (lr > 0, steps >= 1, batch >= 1).
  void validate() const;
};

ConfigMap train_config_entries(const TrainConfig& cfg);
/// Applies "train.*" keys; returns unknown "train.*" keys.
std::vector<std::string> apply_train_config(const ConfigMap& entries, TrainConfig& cfg);

/// Non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::uint64_t step, const std::string& what)
      : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// One training utterance with its ground-truth history window.
struct TrainExample {
  std::string session_id;
  std::size_t utt_index = 0;
  std::shared_ptr<const FeatureMatrix> features;  // null for text-only data
  LabelSequence tokens;
  std::vector<HistoryUtterance> history;  // oldest first
};

/// Every utterance of `sessions`, each with up to `window` previous ones.
std::vector<TrainExample> make_examples(const std::vector<ManifestSession>& sessions, std::size_t window);

struct StepMetrics {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double loss_total = 0.0;
  double loss_rnnt = 0.0;
  double loss_lm = 0.0;
  double loss_ctc = 0.0;
  double beta = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

enum class Objective : std::uint8_t {
  kJoint,    // full composite loss
  kLmOnly,   // Pred^V language-model loss, vocab.* parameters only
};

/// Sequential mini-batch Adam training. The batch at step s holds positions
/// s*B .. s*B+B-1 of an endless stream whose epoch e is a permutation drawn
/// from (seed, e), so a run resumed at step s sees the same data.
class Trainer {
 public:
  Trainer(FntModel& model, std::vector<TrainExample> data, TrainConfig config,
          Objective objective = Objective::kJoint);

  const TrainConfig& config() const { return config_; }
  std::uint64_t steps_done() const { return adam_.steps(); }

  /// One optimizer step. Throws DivergenceError before touching parameters
  /// when the loss or gradient is not finite.
  StepMetrics step();

  /// Parameters, optimizer, step counter, RNG state and config echo.
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);

 private:
  const TrainExample& example_at(std::uint64_t position);

  FntModel& model_;
  std::vector<TrainExample> data_;
  TrainConfig config_;
  Objective objective_;
  std::vector<std::pair<std::string, Tensor>> params_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::uint64_t order_epoch_ = UINT64_MAX;
  std::vector<std::size_t> order_;
};

/// Mean per-token negative log-likelihood of Pred^V (end token included),
/// without history; exp() of it is the perplexity.
/// Frozen context table built from the vocab predictor's token embedding:
/// rows 0..V copy the embedding, the separator row is the mean token row,
/// the no-history row is zero.
ContextTable export_context_table(FntModel& model);

double lm_nll(const FntModel& model, const std::vector<LabelSequence>& sentences);

/// Teacher-forced mean total loss over `data`.
double mean_loss(const FntModel& model, const std::vector<TrainExample>& data);

}  // namespace lfnt
