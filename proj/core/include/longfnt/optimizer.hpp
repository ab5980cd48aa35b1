// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "longfnt/tensor.hpp"

namespace lfnt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  std::size_t warmup_steps = 200;  // linear ramp from lr/warmup to lr
  double clip_norm = 0.0;          // global gradient-norm clip; 0 disables

  void validate() const;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// Adam over a fixed set of named leaf tensors.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return state_.step; }
  /// Learning rate applied by the next call to step().
  double learning_rate() const;

  void zero_grad();
  /// Applies one update from the accumulated gradients; returns the
  /// pre-clip global gradient norm. Parameters without a gradient count as 0.
  double step();

  const AdamState& state() const { return state_; }
  /// Throws ShapeError if the moments do not match the parameter set.
  void load_state(const AdamState& state);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace lfnt
