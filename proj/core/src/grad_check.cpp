// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace lfnt {

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                           const GradCheckOptions& options) {
  for (const auto& p : params) {
    if (p.dtype() != DType::kF64) {
      throw NumericError("grad_check: parameters must be 64-bit (finite differences are meaningless in 32-bit)");
    }
  }
  for (auto& p : params) p.zero_grad();
  Tensor out = loss();
  if (out.numel() != 1) throw ShapeError("grad_check", "loss must be scalar, got " + shape_str(out.shape()));
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad_values());

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].mutable_data<double>();
    const std::size_t n = data.size();
    std::size_t stride = 1;
    if (options.max_entries_per_param > 0 && n > options.max_entries_per_param) {
      stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + options.step;
      const double up = loss().item();
      data[i] = saved - options.step;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      double rel = std::abs(a - numeric) / denom;
      if (std::isnan(rel)) rel = std::numeric_limits<double>::infinity();
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace lfnt
