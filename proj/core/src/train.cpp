// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "config_util.hpp"
#include "longfnt/ops.hpp"

namespace lfnt {

namespace {

constexpr std::uint64_t kOrderStream = 0x0dde7;
constexpr std::uint64_t kNoiseStream = 0xd7a0;

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  adam.validate();
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (steps == 0) throw ConfigError("train.steps must be at least 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
}

ConfigMap train_config_entries(const TrainConfig& c) {
  return {
      {"train.seed", std::to_string(c.seed)},
      {"train.steps", std::to_string(c.steps)},
      {"train.batch_size", std::to_string(c.batch_size)},
      {"train.lr", number(c.adam.lr)},
      {"train.beta1", number(c.adam.beta1)},
      {"train.beta2", number(c.adam.beta2)},
      {"train.eps", number(c.adam.eps)},
      {"train.warmup_steps", std::to_string(c.adam.warmup_steps)},
      {"train.clip_norm", number(c.adam.clip_norm)},
      {"train.checkpoint_every", std::to_string(c.checkpoint_every)},
      {"train.spec_augment", c.spec_augment ? "true" : "false"},
      {"train.augment.max_freq_width", std::to_string(c.augment.max_freq_width)},
      {"train.augment.freq_masks", std::to_string(c.augment.freq_masks)},
      {"train.augment.max_time_ratio", number(c.augment.max_time_ratio)},
      {"train.augment.time_masks", std::to_string(c.augment.time_masks)},
      {"train.precision", c.precision == DType::kF32 ? "f32" : "f64"},
  };
}

std::vector<std::string> apply_train_config(const ConfigMap& entries, TrainConfig& c) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_size;
  std::vector<std::string> unknown;
  for (const auto& [k, v] : entries) {
    if (k.rfind("train.", 0) != 0) continue;
    try {
      if (k == "train.seed") c.seed = detail::parse_u64(k, v);
      else if (k == "train.steps") c.steps = parse_size(k, v);
      else if (k == "train.batch_size") c.batch_size = parse_size(k, v);
      else if (k == "train.lr") c.adam.lr = parse_double(k, v);
      else if (k == "train.beta1") c.adam.beta1 = parse_double(k, v);
      else if (k == "train.beta2") c.adam.beta2 = parse_double(k, v);
      else if (k == "train.eps") c.adam.eps = parse_double(k, v);
      else if (k == "train.warmup_steps") c.adam.warmup_steps = parse_size(k, v);
      else if (k == "train.clip_norm") c.adam.clip_norm = parse_double(k, v);
      else if (k == "train.checkpoint_every") c.checkpoint_every = parse_size(k, v);
      else if (k == "train.spec_augment") c.spec_augment = parse_bool(k, v);
      else if (k == "train.augment.max_freq_width") c.augment.max_freq_width = parse_size(k, v);
      else if (k == "train.augment.freq_masks") c.augment.freq_masks = parse_size(k, v);
      else if (k == "train.augment.max_time_ratio") c.augment.max_time_ratio = parse_double(k, v);
      else if (k == "train.augment.time_masks") c.augment.time_masks = parse_size(k, v);
      else if (k == "train.precision") {
        if (v == "f32") c.precision = DType::kF32;
        else if (v == "f64") c.precision = DType::kF64;
        else throw ConfigError(k + ": expected f32|f64, got '" + v + "'");
      } else unknown.push_back(k);
    } catch (const ShapeError& e) {
      throw ConfigError(e.what());
    }
  }
  return unknown;
}

std::vector<TrainExample> make_examples(const std::vector<ManifestSession>& sessions, std::size_t window) {
  std::vector<TrainExample> out;
  for (const auto& s : sessions) {
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      TrainExample ex;
      ex.session_id = s.id;
      ex.utt_index = i;
      ex.features = s.features.at(i);
      ex.tokens = s.records[i].tokens;
      for (std::size_t h = i > window ? i - window : 0; h < i; ++h) {
        ex.history.push_back({s.records[h].tokens, s.features.at(h)});
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, Tensor>> trainable(FntModel& model, Objective objective) {
  auto all = model.named_parameters();
  if (objective == Objective::kJoint) return all;
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& p : all) {
    if (p.first.rfind("vocab.", 0) == 0) out.push_back(p);
  }
  return out;
}

}  // namespace

Trainer::Trainer(FntModel& model, std::vector<TrainExample> data, TrainConfig config, Objective objective)
    : model_(model),
      data_(std::move(data)),
      config_(config),
      objective_(objective),
      params_(trainable(model, objective)),
      adam_(params_, config.adam),
      rng_(detail::derive_seed(config.seed, kNoiseStream)) {
  if (data_.empty()) throw ConfigError("training data is empty");
  if (config_.batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (objective_ == Objective::kJoint) {
    for (const auto& ex : data_) {
      if (!ex.features) throw ConfigError("utterance " + ex.session_id + "/" + std::to_string(ex.utt_index) +
                                          " has no features");
    }
  }
}

const TrainExample& Trainer::example_at(std::uint64_t position) {
  const std::uint64_t n = data_.size();
  const std::uint64_t epoch = position / n;
  if (epoch != order_epoch_) {
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(detail::derive_seed(config_.seed, kOrderStream + epoch));
    std::shuffle(order_.begin(), order_.end(), shuffle_rng);
    order_epoch_ = epoch;
  }
  return data_[order_[position % n]];
}

StepMetrics Trainer::step() {
  PrecisionScope scope(model_.dtype());
  adam_.zero_grad();
  const std::uint64_t step_index = adam_.steps();
  StepMetrics m;
  m.step = step_index + 1;
  m.lr = adam_.learning_rate();
  const double inv = 1.0 / static_cast<double>(config_.batch_size);
  DropoutRng noise = model_.config().dropout > 0.0 ? &rng_ : nullptr;
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const TrainExample& ex = example_at(step_index * config_.batch_size + b);
    try {
      Tensor total;
      if (objective_ == Objective::kJoint) {
        FeatureMatrix augmented;
        const FeatureMatrix* x = ex.features.get();
        if (config_.spec_augment) {
          augmented = spec_augment(*x, config_.augment, rng_);
          x = &augmented;
        }
        const LossBreakdown lb = model_.loss(*x, ex.tokens, ex.history, noise);
        total = lb.total;
        m.loss_rnnt += lb.transducer * inv;
        m.loss_lm += lb.lm * inv;
        if (lb.ctc_feasible) m.loss_ctc += lb.ctc * inv;
      } else {
        total = lm_loss(model_.vocab_predictor(ex.tokens, Tensor(), noise), ex.tokens, kBlank);
        m.loss_lm += total.item() * inv;
      }
      const double value = total.item();
      if (!std::isfinite(value)) {
        throw DivergenceError(m.step, "loss is " + number(value) + " on " + ex.session_id + "/" +
                                          std::to_string(ex.utt_index));
      }
      m.loss_total += value * inv;
      scale(total, inv).backward();
    } catch (const NumericError& e) {
      throw DivergenceError(m.step, std::string(e.what()) + " on " + ex.session_id + "/" +
                                        std::to_string(ex.utt_index));
    }
  }
  double sq = 0.0;
  for (const auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    for (double g : t.grad_values()) sq += g * g;
  }
  if (!std::isfinite(sq)) throw DivergenceError(m.step, "gradient is not finite");
  m.grad_norm = adam_.step();
  m.beta = model_.beta().defined() ? model_.beta().item() : 0.0;
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config = model_config_entries(model_.config());
  for (auto& [k, v] : train_config_entries(config_)) ck.config[k] = v;
  ck.config["train.objective"] = objective_ == Objective::kJoint ? "joint" : "lm";
  ck.params = capture_parameters(model_);
  ck.has_optimizer = true;
  ck.optimizer = adam_.state();
  ck.step = adam_.steps();
  std::ostringstream os;
  os << rng_;
  ck.rng_state = os.str();
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  load_parameters(model_, ck);
  if (!ck.has_optimizer) throw FormatError("checkpoint has no optimizer state to resume from");
  adam_.load_state(ck.optimizer);
  std::istringstream is(ck.rng_state);
  is >> rng_;
  if (!is) throw FormatError("checkpoint RNG state is unreadable");
  order_epoch_ = UINT64_MAX;
}

ContextTable export_context_table(FntModel& model) {
  const std::size_t V = model.config().vocab_size;
  Tensor embedding;
  for (auto& [name, t] : model.named_parameters()) {
    if (name == "vocab.embedding") embedding = t;
  }
  if (!embedding.defined()) throw ConfigError("model has no vocab.embedding to export");
  const std::size_t d = embedding.cols();
  const auto v = embedding.values();
  ContextTable table{V + 3, d, std::vector<float>((V + 3) * d, 0.0f)};
  for (std::size_t i = 0; i < (V + 1) * d; ++i) table.data[i] = static_cast<float>(v[i]);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 1; r <= V; ++r) mean += v[r * d + c];
    table.data[(V + 1) * d + c] = static_cast<float>(mean / static_cast<double>(V));
  }
  return table;
}

double lm_nll(const FntModel& model, const std::vector<LabelSequence>& sentences) {
  PrecisionScope scope(model.dtype());
  NoGradScope no_grad;
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& y : sentences) {
    const double mean = lm_loss(model.vocab_predictor(y, Tensor(), nullptr), y, kBlank).item();
    nll += mean * static_cast<double>(y.size() + 1);
    tokens += y.size() + 1;
  }
  return tokens ? nll / static_cast<double>(tokens) : 0.0;
}

double mean_loss(const FntModel& model, const std::vector<TrainExample>& data) {
  PrecisionScope scope(model.dtype());
  NoGradScope no_grad;
  double total = 0.0;
  for (const auto& ex : data) total += model.loss(*ex.features, ex.tokens, ex.history, nullptr).total.item();
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

}  // namespace lfnt
