// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>

#include "longfnt/checkpoint.hpp"
#include "longfnt/diagnostics.hpp"

namespace lfnt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (train|dev|test)");
}

json step_record(const StepMetrics& m) {
  return {{"step", m.step},         {"loss_total", m.loss_total}, {"loss_rnnt", m.loss_rnnt},
          {"loss_lm", m.loss_lm},   {"loss_ctc", m.loss_ctc},     {"beta", m.beta},
          {"lr", m.lr},             {"grad_norm", m.grad_norm}};
}

json wer_fields(const WerReport& r) {
  return {{"wer", r.wer()},
          {"substitutions", r.substitutions},
          {"deletions", r.deletions},
          {"insertions", r.insertions},
          {"ref_len", r.reference_length}};
}

/// Config keys for a data directory: its corpus.conf, with the model's
/// vocabulary and feature width taken from it.
ConfigMap data_defaults(const std::string& data) {
  ConfigMap base = corpus_conf(data);
  inherit_corpus_shape(base, base);
  return base;
}

void seed_settings(Settings& s, std::uint64_t seed) {
  s.train.seed = seed;
  if (!s.entries.count("model.seed")) s.model.seed = seed;
}

}  // namespace

int gen_corpus(const CommonOptions& common, const GenCorpusArgs& args) {
  Settings s = resolve(common);
  CorpusSpec spec = s.corpus;
  spec.seed = args.seed;
  if (args.control) spec = CorpusSpec::control(spec);
  spec.validate();
  const Corpus corpus = generate_corpus(spec);
  const fs::path out(args.out);
  std::size_t utterances = 0;
  for (const auto& session : corpus.sessions) utterances += session.utterances.size();
  json summary{{"command", "gen-corpus"}, {"out", args.out}, {"sessions", corpus.sessions.size()},
               {"utterances", utterances}, {"seed", spec.seed}};
  if (args.text_only) {
    fs::create_directories(out);
    write_text_corpus(corpus, out / "text.jsonl");
    write_config_file(out / "corpus.conf", corpus_spec_entries(spec));
    summary["text_checksum"] = hex(file_checksum(out / "text.jsonl"));
  } else {
    write_corpus(corpus, out);
    for (const char* split : {"train", "dev", "test"}) {
      summary[std::string(split) + "_checksum"] = hex(file_checksum(out / (std::string(split) + ".jsonl")));
    }
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int train(const CommonOptions& common, const TrainArgs& args) {
  Settings s = resolve(common, data_defaults(args.data));
  seed_settings(s, args.seed);
  s.train.validate();

  const auto sessions = load_sessions(read_manifest(fs::path(args.data) / "train.jsonl"), args.data);
  check_data(sessions, s.model, true);
  const auto& lf = s.model.longform;
  auto model = make_model(s.model, s.train.precision);
  if (!args.init.empty()) {
    const std::size_t n = load_parameters(*model, load_checkpoint(args.init), "vocab.");
    std::cerr << "initialized " << n << " vocab parameters from " << args.init << '\n';
  }
  Trainer trainer(*model, make_examples(sessions, std::max(lf.n_text, lf.n_speech)), s.train);
  if (!args.resume.empty()) {
    trainer.restore(load_checkpoint(args.resume));
    std::cerr << "resumed at step " << trainer.steps_done() << '\n';
  }
  MetricsLog log(args.metrics);
  StepMetrics last;
  try {
    while (trainer.steps_done() < s.train.steps) {
      last = trainer.step();
      log.write(step_record(last));
      if (args.log_every && last.step % args.log_every == 0) {
        std::cerr << "step " << last.step << " loss " << last.loss_total << " rnnt " << last.loss_rnnt << " lm "
                  << last.loss_lm << " beta " << last.beta << '\n';
      }
      if (s.train.checkpoint_every && last.step % s.train.checkpoint_every == 0) {
        save_checkpoint(args.out, trainer.checkpoint());
      }
    }
  } catch (const DivergenceError& e) {
    save_checkpoint(args.out, trainer.checkpoint());
    std::cerr << "longfnt: " << e.what() << "; last good state written to " << args.out << '\n';
    log.write({{"step", e.step()}, {"diverged", true}});
    return 3;
  }
  save_checkpoint(args.out, trainer.checkpoint());
  json summary{{"command", "train"},         {"out", args.out},
               {"steps", trainer.steps_done()}, {"loss_total", last.loss_total},
               {"beta", last.beta},           {"param_checksum", hex(parameter_checksum(*model))}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int lm_pretrain(const CommonOptions& common, const LmPretrainArgs& args) {
  Settings s = resolve(common, data_defaults(args.data));
  seed_settings(s, args.seed);
  s.train.validate();
  if (!(args.held_out >= 0.0 && args.held_out < 1.0)) throw ConfigError("--held-out must lie in [0, 1)");

  const auto sessions = load_sessions(read_manifest(fs::path(args.data) / args.manifest), args.data, false);
  check_data(sessions, s.model, false);
  const auto n_held = static_cast<std::size_t>(std::floor(args.held_out * static_cast<double>(sessions.size())));
  std::vector<TrainExample> text;
  std::vector<LabelSequence> held;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    for (const auto& r : sessions[i].records) {
      if (i + n_held >= sessions.size()) held.push_back(r.tokens);
      else text.push_back({sessions[i].id, r.utt_index, nullptr, r.tokens, {}});
    }
  }
  auto model = make_model(s.model, s.train.precision);
  const double before = held.empty() ? 0.0 : lm_nll(*model, held);
  Trainer trainer(*model, std::move(text), s.train, Objective::kLmOnly);
  MetricsLog log(args.metrics);
  StepMetrics last;
  try {
    while (trainer.steps_done() < s.train.steps) {
      last = trainer.step();
      log.write(step_record(last));
      if (args.log_every && last.step % args.log_every == 0) {
        std::cerr << "step " << last.step << " lm " << last.loss_lm << '\n';
      }
    }
  } catch (const DivergenceError& e) {
    save_checkpoint(args.out, trainer.checkpoint());
    std::cerr << "longfnt: " << e.what() << '\n';
    return 3;
  }
  save_checkpoint(args.out, trainer.checkpoint());
  json summary{{"command", "lm-pretrain"}, {"out", args.out}, {"steps", trainer.steps_done()}};
  if (!held.empty()) {
    const double after = lm_nll(*model, held);
    summary["held_out_sentences"] = held.size();
    summary["held_out_ppl_fresh"] = std::exp(before);
    summary["held_out_ppl"] = std::exp(after);
  }
  if (!args.export_context.empty()) {
    write_context_table(args.export_context, export_context_table(*model));
    summary["context_table"] = args.export_context;
    summary["context_checksum"] = hex(file_checksum(args.export_context));
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int decode(const CommonOptions& common, const DecodeArgs& args) {
  const Checkpoint ck = load_checkpoint(args.checkpoint);
  ConfigMap base = ck.config;
  base.erase("train.objective");
  Settings s = resolve(common, base);
  DecodeSettings d = s.decode;
  if (args.beam) d.options.beam = *args.beam;
  if (args.greedy) d.options.beam = 0;
  if (args.source) {
    if (*args.source == "gt") d.source = Provenance::kReference;
    else if (*args.source == "hyp") d.source = Provenance::kHypothesis;
    else throw ConfigError("--source must be gt or hyp");
  }
  if (args.single_thread) d.threads = 1;

  auto model = make_model(s.model, s.train.precision);
  load_parameters(*model, ck);
  const Split split = parse_split(args.split);
  const fs::path manifest = fs::path(args.data) / (std::string(to_string(split)) + ".jsonl");
  const auto sessions = load_sessions(read_manifest(manifest), args.data);
  check_data(sessions, s.model, true);

  const CorpusResult result = decode_corpus(*model, sessions, d.source, d.options, std::max<std::size_t>(1, d.threads));
  MetricsLog log(args.metrics);
  std::vector<ManifestRecord> hyps;
  std::size_t utterances = 0;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    for (const auto& u : result.sessions[i].utterances) {
      const auto& rec = sessions[i].records[u.utt_index];
      json r{{"utt", rec.session_id + "/" + std::to_string(rec.utt_index)},
             {"session", rec.session_id},
             {"utt_index", rec.utt_index}};
      r.update(wer_fields(u.report));
      r["hyp"] = u.hypothesis;
      log.write(r);
      hyps.push_back({rec.session_id, rec.utt_index, rec.feature_file, u.hypothesis, tokens_to_text(u.hypothesis)});
      ++utterances;
    }
  }
  if (!args.output.empty()) {
    const fs::path out(args.output);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_manifest(out, hyps);
  }
  json summary{{"summary", "decode"},
               {"split", to_string(split)},
               {"source", to_string(d.source)},
               {"beam", d.options.beam},
               {"sessions", sessions.size()},
               {"utterances", utterances}};
  summary.update(wer_fields(result.report));
  log.write(summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

int score(const ScoreArgs& args) {
  const auto refs = read_manifest(args.ref);
  const auto hyp_records = read_manifest(args.hyp);
  std::map<std::pair<std::string, std::size_t>, const ManifestRecord*> hyps;
  for (const auto& h : hyp_records) {
    if (!hyps.emplace(std::pair{h.session_id, h.utt_index}, &h).second) {
      throw ConfigError("duplicate hypothesis for " + h.session_id + "/" + std::to_string(h.utt_index));
    }
  }
  MetricsLog log(args.metrics);
  WerReport total;
  for (const auto& r : refs) {
    auto it = hyps.find({r.session_id, r.utt_index});
    if (it == hyps.end()) throw ConfigError("no hypothesis for " + r.session_id + "/" + std::to_string(r.utt_index));
    const WerReport w = wer(r.tokens, it->second->tokens);
    total += w;
    json rec{{"utt", r.session_id + "/" + std::to_string(r.utt_index)}};
    rec.update(wer_fields(w));
    log.write(rec);
    hyps.erase(it);
  }
  if (!hyps.empty()) {
    const auto& [key, rec] = *hyps.begin();
    throw ConfigError(std::to_string(hyps.size()) + " hypotheses have no reference, e.g. " + key.first + "/" +
                      std::to_string(key.second));
  }
  json summary{{"summary", "score"}, {"utterances", refs.size()}};
  summary.update(wer_fields(total));
  log.write(summary);
  std::cout << summary.dump() << '\n';
  return 0;
}

int grad_check(const GradCheckArgs& args) {
  bool ok = true;
  for (const auto& r : gradient_suite(args.seed, args.tolerance)) {
    ok = ok && r.passed();
    std::printf("%-40s rel_err=%.3e  %s\n", r.name.c_str(), r.value, r.passed() ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

int oracle_check(const CommonOptions& common, const OracleCheckArgs& args) {
  const LatticeOracleReport r = lattice_oracle(args.instances, args.seed);
  const bool ok = r.max_transducer_diff <= 1e-6 && r.max_ctc_diff <= 1e-6 && r.ctc_mismatch == 0;
  std::cout << json{{"check", "lattice"},
                    {"instances", r.instances},
                    {"max_transducer_diff", r.max_transducer_diff},
                    {"max_ctc_diff", r.max_ctc_diff},
                    {"ctc_infeasible", r.ctc_infeasible},
                    {"ctc_mismatch", r.ctc_mismatch},
                    {"pass", ok}}
                   .dump()
            << '\n';
  if (!args.data.empty()) {
    Settings s = resolve(common, corpus_conf(args.data));
    const Corpus corpus = generate_corpus(s.corpus);
    const Split split = parse_split(args.split);
    for (std::size_t h = 0; h <= args.max_history; ++h) {
      const OracleReport o = corpus_oracles(corpus, split, h);
      std::cout << json{{"check", "history"},
                        {"split", to_string(split)},
                        {"history", h},
                        {"confusable_tokens", o.confusable_tokens},
                        {"confusable_error_blind", o.confusable_error_blind},
                        {"confusable_error_history", o.confusable_error_history},
                        {"accent_utterances", o.accent_utterances},
                        {"accent_accuracy_current", o.accent_accuracy_current},
                        {"accent_accuracy_history", o.accent_accuracy_history},
                        {"entropy_no_history", o.entropy_no_history},
                        {"entropy_history", o.entropy_history}}
                       .dump()
                << '\n';
    }
  }
  return ok ? 0 : 1;
}

}  // namespace lfnt::cli
