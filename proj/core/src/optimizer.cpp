// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace lfnt {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ShapeError("adam", "lr must be a finite non-negative number");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ShapeError("adam", "betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ShapeError("adam", "eps must be positive");
  if (clip_norm < 0.0) throw ShapeError("adam", "clip_norm must be non-negative");
}

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& [name, t] : params_) {
    state_.moments[name] = {std::vector<double>(t.numel(), 0.0), std::vector<double>(t.numel(), 0.0)};
  }
}

double Adam::learning_rate() const {
  if (config_.warmup_steps == 0) return config_.lr;
  const double ramp = static_cast<double>(state_.step + 1) / static_cast<double>(config_.warmup_steps);
  return config_.lr * std::min(1.0, ramp);
}

void Adam::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double Adam::step() {
  double sq = 0.0;
  for (const auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    for (double g : t.grad_values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  double factor = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) factor = config_.clip_norm / norm;

  const double lr = learning_rate();
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, p] : params_) {
    auto& mom = state_.moments.at(name);
    const std::vector<double> grad = p.has_grad() ? p.grad_values() : std::vector<double>(p.numel(), 0.0);
    dispatch(p.dtype(), [&]<class T>() {
      auto w = p.mutable_data<T>();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = grad[i] * factor;
        mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
        mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
        const double update = lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + config_.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    });
  }
  return norm;
}

void Adam::load_state(const AdamState& state) {
  for (const auto& [name, t] : params_) {
    auto it = state.moments.find(name);
    if (it == state.moments.end()) throw ShapeError("adam", "optimizer state has no entry for " + name);
    if (it->second.m.size() != t.numel() || it->second.v.size() != t.numel()) {
      throw ShapeError("adam", "optimizer state size mismatch for " + name);
    }
  }
  if (state.moments.size() != params_.size()) throw ShapeError("adam", "optimizer state has extra entries");
  state_ = state;
}

}  // namespace lfnt
