// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "longfnt/features.hpp"
#include "longfnt/tensor.hpp"

using namespace lfnt::cli;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

void add_common(CLI::App* cmd, CommonOptions& common) {
  cmd->add_option("-c,--config", common.config_file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", common.overrides, "override a config key (key=value), repeatable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LongFNT long-form factorized transducer toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "longfnt 0.1.0");

  CommonOptions common;

  GenCorpusArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic session corpus");
  add_common(gen_cmd, common);
  gen_cmd->add_option("--seed", gen.seed, "corpus seed")->required();
  gen_cmd->add_option("-o,--out", gen.out, "output directory")->required();
  gen_cmd->add_flag("--control", gen.control, "remove every cross-utterance signal");
  gen_cmd->add_flag("--text-only", gen.text_only, "write <out>/text.jsonl without features");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a transducer on a corpus directory");
  add_common(train_cmd, common);
  train_cmd->add_option("--seed", tr.seed, "training seed (data order, augmentation, default init)")->required();
  train_cmd->add_option("-d,--data", tr.data, "corpus directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("-o,--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--init", tr.init, "load vocab.* parameters from an lm-pretrain checkpoint")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", tr.resume, "continue from a training checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--metrics", tr.metrics, "JSONL metrics log (appended)");
  train_cmd->add_option("--log-every", tr.log_every, "progress line interval on stderr (0 = quiet)");
  train_cmd->add_flag("--single-thread", "accepted for symmetry; training is always single-threaded");

  LmPretrainArgs lm;
  auto* lm_cmd = app.add_subcommand("lm-pretrain", "pretrain the vocabulary predictor on text");
  add_common(lm_cmd, common);
  lm_cmd->add_option("--seed", lm.seed, "training seed")->required();
  lm_cmd->add_option("-d,--data", lm.data, "directory holding the text manifest")
      ->required()
      ->check(CLI::ExistingDirectory);
  lm_cmd->add_option("--manifest", lm.manifest, "manifest file name inside --data");
  lm_cmd->add_option("-o,--out", lm.out, "checkpoint path")->required();
  lm_cmd->add_option("--export-context", lm.export_context, "also write a frozen context table (LFCE)");
  lm_cmd->add_option("--held-out", lm.held_out, "fraction of sessions held out for perplexity");
  lm_cmd->add_option("--metrics", lm.metrics, "JSONL metrics log (appended)");
  lm_cmd->add_option("--log-every", lm.log_every, "progress line interval on stderr (0 = quiet)");

  DecodeArgs dec;
  auto* dec_cmd = app.add_subcommand("decode", "decode a split session by session");
  add_common(dec_cmd, common);
  dec_cmd->add_option("--checkpoint", dec.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  dec_cmd->add_option("-d,--data", dec.data, "corpus directory")->required()->check(CLI::ExistingDirectory);
  dec_cmd->add_option("--split", dec.split, "train|dev|test");
  dec_cmd->add_option("--source", dec.source, "history source: gt|hyp");
  dec_cmd->add_option("--beam", dec.beam, "beam width");
  dec_cmd->add_flag("--greedy", dec.greedy, "greedy decoding");
  dec_cmd->add_option("--output", dec.output, "write hypotheses as a manifest");
  dec_cmd->add_option("--metrics", dec.metrics, "JSONL metrics log (appended)");
  dec_cmd->add_flag("--single-thread", dec.single_thread, "decode sessions on one thread");

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "token error rate of a hypothesis manifest");
  score_cmd->add_option("--ref", sc.ref, "reference manifest")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--hyp", sc.hyp, "hypothesis manifest")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--metrics", sc.metrics, "JSONL metrics log (appended)");

  GradCheckArgs gc;
  auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference gradient suite in 64-bit");
  grad_cmd->add_option("--seed", gc.seed, "seed for inputs and weights");
  grad_cmd->add_option("--tolerance", gc.tolerance, "maximum relative error");

  OracleCheckArgs oc;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "lattice losses vs enumeration; corpus history oracles");
  add_common(oracle_cmd, common);
  oracle_cmd->add_option("--instances", oc.instances, "fuzzed lattice instances");
  oracle_cmd->add_option("--seed", oc.seed, "fuzzing seed");
  oracle_cmd->add_option("-d,--data", oc.data, "corpus directory for the history oracles")
      ->check(CLI::ExistingDirectory);
  oracle_cmd->add_option("--split", oc.split, "train|dev|test");
  oracle_cmd->add_option("--max-history", oc.max_history, "largest history window reported");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen_cmd) return gen_corpus(common, gen);
    if (*train_cmd) return train(common, tr);
    if (*lm_cmd) return lm_pretrain(common, lm);
    if (*dec_cmd) return decode(common, dec);
    if (*score_cmd) return score(sc);
    if (*grad_cmd) return grad_check(gc);
    if (*oracle_cmd) return oracle_check(common, oc);
  } catch (const lfnt::DivergenceError& e) {
    std::cerr << "longfnt: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const lfnt::NumericError& e) {
    std::cerr << "longfnt: numerical error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "longfnt: " << e.what() << '\n';
    return kExitValidation;
  } catch (const lfnt::FormatError& e) {
    std::cerr << "longfnt: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "longfnt: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
