// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>

#include "longfnt/tensor.hpp"

namespace lfnt {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for the relative error, so entries whose true
  /// gradient is ~0 are judged on absolute error instead.
  double abs_floor = 1e-6;
  /// Entries checked per parameter, evenly strided. 0 = all.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients of the scalar `loss()` with respect to each
/// parameter against central differences. Parameters must be kF64 leaves.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                           const GradCheckOptions& options = {});

}  // namespace lfnt
