// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "longfnt/tensor.hpp"

// Sequence losses over log-normalized scores. Blank is symbol 0 for both the
// transducer and CTC; inputs are never renormalized here.
namespace lfnt {

inline constexpr std::int64_t kBlank = 0;

/// Target tokens y_1..y_U, each in [1, V].
using LabelSequence = std::vector<std::int64_t>;

/// Dimensions of a transducer lattice: scores are laid out
/// [frames x (labels+1) x vocab_ext], row-major.
struct LatticeDims {
  std::size_t frames = 0;
  std::size_t labels = 0;
  std::size_t vocab_ext = 0;

  std::size_t size() const noexcept { return frames * (labels + 1) * vocab_ext; }
};

struct LossWithGrad {
  double loss = 0.0;
  /// d loss / d log_probs, same layout as the input.
  std::vector<double> grad;
  /// False when no alignment exists (CTC only); loss is then +inf, grad zero.
  bool feasible = true;
};

/// -log of the summed probability of all monotone blank/label paths.
/// Alpha/beta recursions in double precision.
LossWithGrad transducer_loss(std::span<const double> log_probs, const LatticeDims& dims,
                             std::span<const std::int64_t> labels);

/// Exhaustive path enumeration. Requires frames + labels <= 12.
double brute_force_transducer_loss(std::span<const double> log_probs, const LatticeDims& dims,
                                   std::span<const std::int64_t> labels);

/// Number of lattice paths: C(frames - 1 + labels, labels).
std::size_t transducer_path_count(std::size_t frames, std::size_t labels);

/// CTC over the 2U+1 blank-interleaved label sequence. log_probs is
/// [frames x vocab_ext].
LossWithGrad ctc_loss(std::span<const double> log_probs, std::size_t frames,
                      std::size_t vocab_ext, std::span<const std::int64_t> labels);

/// Enumerates all vocab_ext^frames frame labelings. Requires at most 2^20.
double brute_force_ctc_loss(std::span<const double> log_probs, std::size_t frames,
                            std::size_t vocab_ext, std::span<const std::int64_t> labels);

/// Mean next-token NLL. log_probs is [(U+1) x classes]; row l predicts
/// labels[l], and the last row predicts `end_symbol`.
double lm_loss(std::span<const double> log_probs, std::size_t classes,
               std::span<const std::int64_t> labels, std::int64_t end_symbol);

// Graph versions. Losses are computed in double and cast to the input dtype.

/// log_probs: [(frames*(U+1)) x vocab_ext].
Tensor transducer_loss(const Tensor& log_probs, std::size_t frames,
                       std::span<const std::int64_t> labels);
/// Same value through an alpha recursion built from graph ops (logaddexp),
/// so its gradient comes from autodiff rather than the beta recursion.
Tensor transducer_loss_autodiff(const Tensor& log_probs, std::size_t frames,
                                std::span<const std::int64_t> labels);
/// log_probs: [frames x vocab_ext]. Infeasible alignments give +inf and
/// contribute no gradient.
Tensor ctc_loss(const Tensor& log_probs, std::span<const std::int64_t> labels);
Tensor lm_loss(const Tensor& log_probs, std::span<const std::int64_t> labels,
               std::int64_t end_symbol);

}  // namespace lfnt
