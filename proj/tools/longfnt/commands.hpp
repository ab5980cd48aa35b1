// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cli_common.hpp"

namespace lfnt::cli {

struct GenCorpusArgs {
  std::uint64_t seed = 0;
  std::string out;
  bool control = false;
  bool text_only = false;
};

struct TrainArgs {
  std::uint64_t seed = 0;
  std::string data;
  std::string out;
  std::string init;    // LM-pretrained checkpoint, vocab.* loaded by name
  std::string resume;  // trainer checkpoint to continue from
  std::string metrics;
  std::size_t log_every = 100;
};

struct LmPretrainArgs {
  std::uint64_t seed = 0;
  std::string data;
  std::string manifest = "text.jsonl";
  std::string out;
  std::string export_context;  // optional LFCE table
  std::string metrics;
  std::size_t log_every = 100;
  double held_out = 0.05;
};

struct DecodeArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string output;
  std::string metrics;
  bool greedy = false;
  std::optional<std::size_t> beam;
  std::optional<std::string> source;
  bool single_thread = false;
};

struct ScoreArgs {
  std::string ref;
  std::string hyp;
  std::string metrics;
};

struct GradCheckArgs {
  std::uint64_t seed = 17;
  double tolerance = 1e-4;
};

struct OracleCheckArgs {
  std::size_t instances = 500;
  std::uint64_t seed = 1;
  std::string data;  // corpus directory for the history oracles
  std::string split = "test";
  std::size_t max_history = 3;
};

int gen_corpus(const CommonOptions& common, const GenCorpusArgs& args);
int train(const CommonOptions& common, const TrainArgs& args);
int lm_pretrain(const CommonOptions& common, const LmPretrainArgs& args);
int decode(const CommonOptions& common, const DecodeArgs& args);
int score(const ScoreArgs& args);
int grad_check(const GradCheckArgs& args);
int oracle_check(const CommonOptions& common, const OracleCheckArgs& args);

}  // namespace lfnt::cli
