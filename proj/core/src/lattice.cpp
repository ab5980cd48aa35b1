// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "longfnt/ops.hpp"
#include "op_support.hpp"

namespace lfnt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_labels(const char* op, std::span<const std::int64_t> labels, std::size_t vocab_ext) {
  for (auto y : labels) {
    if (y == kBlank) throw ShapeError(op, "blank (0) appears in the label sequence");
    if (y < 0 || static_cast<std::size_t>(y) >= vocab_ext) {
      throw ShapeError(op, "label " + std::to_string(y) + " outside vocabulary of " +
                               std::to_string(vocab_ext));
    }
  }
}

void check_finite(const char* op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite score");
  }
}

void check_dims(const char* op, std::span<const double> log_probs, const LatticeDims& dims,
                std::span<const std::int64_t> labels) {
  if (dims.frames == 0) throw ShapeError(op, "zero frames");
  if (dims.labels != labels.size()) {
    throw ShapeError(op, "lattice has " + std::to_string(dims.labels) + " labels, target has " +
                             std::to_string(labels.size()));
  }
  if (log_probs.size() != dims.size()) {
    throw ShapeError(op, Shape{dims.frames, dims.labels + 1, dims.vocab_ext}, Shape{log_probs.size()});
  }
  check_labels(op, labels, dims.vocab_ext);
  check_finite(op, log_probs);
}

}  // namespace

LossWithGrad transducer_loss(std::span<const double> lp, const LatticeDims& dims,
                             std::span<const std::int64_t> labels) {
  check_dims("transducer_loss", lp, dims, labels);
  const std::size_t T = dims.frames, U = dims.labels, V = dims.vocab_ext, W = U + 1;
  auto at = [&](std::size_t t, std::size_t u, std::int64_t k) {
    return lp[(t * W + u) * V + static_cast<std::size_t>(k)];
  };

  std::vector<double> alpha(T * W, kNegInf), beta(T * W, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < W; ++u) {
      if (t == 0 && u == 0) continue;
      double a = kNegInf;
      if (t > 0) a = alpha[(t - 1) * W + u] + at(t - 1, u, kBlank);
      if (u > 0) a = log_add(a, alpha[t * W + u - 1] + at(t, u - 1, labels[u - 1]));
      alpha[t * W + u] = a;
    }
  }
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = W; u-- > 0;) {
      if (t == T - 1 && u == U) {
        beta[t * W + u] = at(t, u, kBlank);
        continue;
      }
      double b = kNegInf;
      if (t + 1 < T) b = at(t, u, kBlank) + beta[(t + 1) * W + u];
      if (u < U) b = log_add(b, at(t, u, labels[u]) + beta[t * W + u + 1]);
      beta[t * W + u] = b;
    }
  }

  LossWithGrad out;
  const double log_z = beta[0];
  out.loss = -log_z;
  out.grad.assign(lp.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u < W; ++u) {
      const double a = alpha[t * W + u];
      double* g = out.grad.data() + (t * W + u) * V;
      if (t == T - 1 && u == U) {
        g[kBlank] = -std::exp(a + at(t, u, kBlank) - log_z);
      } else if (t + 1 < T) {
        g[kBlank] = -std::exp(a + at(t, u, kBlank) + beta[(t + 1) * W + u] - log_z);
      }
      if (u < U) {
        const auto y = static_cast<std::size_t>(labels[u]);
        g[y] = -std::exp(a + at(t, u, labels[u]) + beta[t * W + u + 1] - log_z);
      }
    }
  }
  return out;
}

double brute_force_transducer_loss(std::span<const double> lp, const LatticeDims& dims,
                                   std::span<const std::int64_t> labels) {
  check_dims("brute_force_transducer_loss", lp, dims, labels);
  if (dims.frames + dims.labels > 12) {
    throw ShapeError("brute_force_transducer_loss", "instance too large (frames + labels > 12)");
  }
  const std::size_t T = dims.frames, U = dims.labels, V = dims.vocab_ext, W = U + 1;
  auto at = [&](std::size_t t, std::size_t u, std::int64_t k) {
    return lp[(t * W + u) * V + static_cast<std::size_t>(k)];
  };
  // Each path is scored independently, then all paths are summed.
  std::vector<double> path_scores;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t t, std::size_t u,
                                                                   double score) {
    if (t == T - 1 && u == U) {
      path_scores.push_back(score + at(t, u, kBlank));
      return;
    }
    if (t + 1 < T) walk(t + 1, u, score + at(t, u, kBlank));
    if (u < U) walk(t, u + 1, score + at(t, u, labels[u]));
  };
  walk(0, 0, 0.0);
  const double m = *std::max_element(path_scores.begin(), path_scores.end());
  double total = 0.0;
  for (double s : path_scores) total += std::exp(s - m);
  return -(m + std::log(total));
}

std::size_t transducer_path_count(std::size_t frames, std::size_t labels) {
  if (frames == 0) return 0;
  // C(frames - 1 + labels, labels)
  std::size_t n = frames - 1 + labels, k = labels, r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

LossWithGrad ctc_loss(std::span<const double> lp, std::size_t T, std::size_t V,
                      std::span<const std::int64_t> labels) {
  if (T == 0) throw ShapeError("ctc_loss", "zero frames");
  if (lp.size() != T * V) throw ShapeError("ctc_loss", Shape{T, V}, Shape{lp.size()});
  check_labels("ctc_loss", labels, V);
  check_finite("ctc_loss", lp);
  const std::size_t S = 2 * labels.size() + 1;
  std::vector<std::int64_t> ext(S, kBlank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto at = [&](std::size_t t, std::int64_t k) { return lp[t * V + static_cast<std::size_t>(k)]; };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != kBlank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = at(0, ext[0]);
  if (S > 1) alpha[1] = at(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + at(t, ext[s]);
    }
  }
  beta[(T - 1) * S + S - 1] = at(T - 1, ext[S - 1]);
  if (S > 1) beta[(T - 1) * S + S - 2] = at(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + at(t, ext[s]);
    }
  }

  LossWithGrad out;
  out.grad.assign(lp.size(), 0.0);
  double log_z = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_z = log_add(log_z, alpha[(T - 1) * S + S - 2]);
  if (log_z == kNegInf) {
    out.loss = std::numeric_limits<double>::infinity();
    out.feasible = false;
    return out;
  }
  out.loss = -log_z;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double occ = alpha[t * S + s] + beta[t * S + s] - at(t, ext[s]) - log_z;
      if (occ == kNegInf) continue;
      out.grad[t * V + static_cast<std::size_t>(ext[s])] -= std::exp(occ);
    }
  }
  return out;
}

double brute_force_ctc_loss(std::span<const double> lp, std::size_t T, std::size_t V,
                            std::span<const std::int64_t> labels) {
  if (lp.size() != T * V) throw ShapeError("brute_force_ctc_loss", Shape{T, V}, Shape{lp.size()});
  check_labels("brute_force_ctc_loss", labels, V);
  if (T == 0 || std::pow(static_cast<double>(V), static_cast<double>(T)) > 1048576.0) {
    throw ShapeError("brute_force_ctc_loss", "instance too large for enumeration");
  }
  std::vector<std::size_t> digits(T, 0);
  double total = kNegInf;
  std::vector<std::int64_t> collapsed;
  while (true) {
    collapsed.clear();
    std::int64_t prev = -1;
    double score = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const auto k = static_cast<std::int64_t>(digits[t]);
      score += lp[t * V + digits[t]];
      if (k != kBlank && k != prev) collapsed.push_back(k);
      prev = k;
    }
    if (std::equal(collapsed.begin(), collapsed.end(), labels.begin(), labels.end())) {
      total = log_add(total, score);
    }
    std::size_t i = 0;
    while (i < T && ++digits[i] == V) digits[i++] = 0;
    if (i == T) break;
  }
  return total == kNegInf ? std::numeric_limits<double>::infinity() : -total;
}

double lm_loss(std::span<const double> lp, std::size_t classes,
               std::span<const std::int64_t> labels, std::int64_t end_symbol) {
  const std::size_t rows = labels.size() + 1;
  if (lp.size() != rows * classes) {
    throw ShapeError("lm_loss", Shape{rows, classes}, Shape{lp.size()});
  }
  double total = 0.0;
  for (std::size_t l = 0; l < rows; ++l) {
    const auto target = l < labels.size() ? labels[l] : end_symbol;
    if (target < 0 || static_cast<std::size_t>(target) >= classes) {
      throw ShapeError("lm_loss", "target " + std::to_string(target) + " outside " +
                                      std::to_string(classes) + " classes");
    }
    total -= lp[l * classes + static_cast<std::size_t>(target)];
  }
  return total / static_cast<double>(rows);
}

namespace {

/// Wraps a double-precision loss-with-gradient as a scalar graph node.
Tensor loss_node(const char* op, const Tensor& input, const LossWithGrad& result) {
  return dispatch(input.dtype(), [&]<typename T>() {
    Tensor out = detail::make_output<T>(op, {1}, {&input});
    detail::out_ptr<T>(out)[0] = static_cast<T>(result.loss);
    if (out.requires_grad() && result.feasible) {
      auto grad = std::make_shared<std::vector<double>>(result.grad);
      out.node()->backward = [input, grad](Node& self) {
        const T g = self.grads<T>()[0];
        T* gi = detail::grad_ptr<T>(input);
        for (std::size_t i = 0; i < grad->size(); ++i) gi[i] += g * static_cast<T>((*grad)[i]);
      };
    }
    return out;
  });
}

}  // namespace

Tensor transducer_loss(const Tensor& log_probs, std::size_t frames,
                       std::span<const std::int64_t> labels) {
  const LatticeDims dims{frames, labels.size(), log_probs.cols()};
  if (log_probs.rows() != frames * (labels.size() + 1)) {
    throw ShapeError("transducer_loss", log_probs.shape(),
                     Shape{frames * (labels.size() + 1), log_probs.cols()});
  }
  const auto values = log_probs.values();
  return loss_node("transducer_loss", log_probs, transducer_loss(values, dims, labels));
}

Tensor transducer_loss_autodiff(const Tensor& log_probs, std::size_t frames,
                                std::span<const std::int64_t> labels) {
  const std::size_t U = labels.size(), W = U + 1, V = log_probs.cols();
  if (frames == 0 || log_probs.rows() != frames * W) {
    throw ShapeError("transducer_loss_autodiff", log_probs.shape(), Shape{frames * W, V});
  }
  check_labels("transducer_loss_autodiff", labels, V);
  auto score = [&](std::size_t t, std::size_t u, std::int64_t k) {
    return pick(log_probs, (t * W + u) * V + static_cast<std::size_t>(k));
  };
  std::vector<Tensor> alpha(frames * W);
  {
    PrecisionScope precision(log_probs.dtype());
    alpha[0] = Tensor::scalar(0.0);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t u = 0; u < W; ++u) {
      if (t == 0 && u == 0) continue;
      Tensor a;
      if (t > 0) a = add(alpha[(t - 1) * W + u], score(t - 1, u, kBlank));
      if (u > 0) {
        Tensor b = add(alpha[t * W + u - 1], score(t, u - 1, labels[u - 1]));
        a = a.defined() ? logaddexp(a, b) : b;
      }
      alpha[t * W + u] = a;
    }
  }
  return scale(add(alpha[frames * W - 1], score(frames - 1, U, kBlank)), -1.0);
}

Tensor ctc_loss(const Tensor& log_probs, std::span<const std::int64_t> labels) {
  const auto values = log_probs.values();
  return loss_node("ctc_loss", log_probs,
                   ctc_loss(values, log_probs.rows(), log_probs.cols(), labels));
}

Tensor lm_loss(const Tensor& log_probs, std::span<const std::int64_t> labels,
               std::int64_t end_symbol) {
  if (log_probs.rows() != labels.size() + 1) {
    throw ShapeError("lm_loss", log_probs.shape(), Shape{labels.size() + 1, log_probs.cols()});
  }
  std::vector<std::int64_t> targets(labels.begin(), labels.end());
  targets.push_back(end_symbol);
  return nll_mean(log_probs, targets);
}

}  // namespace lfnt
