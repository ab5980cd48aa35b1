// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "config_util.hpp"
#include "longfnt/config_file.hpp"
#include "longfnt/tensor.hpp"

namespace lfnt {

using detail::derive_seed;

namespace {

constexpr std::uint64_t kTableStream = 0x7ab1e;
constexpr std::size_t kOnsetDim = 0;
constexpr std::size_t kAccentDim = 1;
constexpr std::size_t kPrototypeOffset = 2;

template <class Rng>
std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::size_t sample(const std::vector<double>& p, std::mt19937_64& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last = i;
    u -= p[i];
    if (u < 0.0) return i;
  }
  return last;
}

std::string session_name(std::size_t i) {
  std::ostringstream os;
  os << 's';
  os.width(4);
  os.fill('0');
  os << i;
  return os.str();
}

}  // namespace

// -- spec ------------------------------------------------------------------------------

void CorpusSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ShapeError("corpus", msg); };
  if (vocab_size < 8) fail("vocab_size must be at least 8");
  if (vocab_size < 2 * confusable_pairs + 2 * accent_pairs + 2) {
    fail("vocab_size " + std::to_string(vocab_size) + " leaves fewer than 2 common tokens");
  }
  if (2 * homophone_pairs > common_tokens()) fail("homophone pairs exceed the common tokens");
  if (sessions == 0 || utterances_per_session == 0) fail("need at least one session and utterance");
  if (train_sessions + dev_sessions > sessions) fail("train_sessions + dev_sessions exceeds sessions");
  if (min_tokens == 0 || min_tokens > max_tokens) fail("token range must satisfy 1 <= min_tokens <= max_tokens");
  if (min_frames_per_token == 0 || min_frames_per_token > max_frames_per_token) {
    fail("frame range must satisfy 1 <= min_frames_per_token <= max_frames_per_token");
  }
  if (feature_dim <= kPrototypeOffset) fail("feature_dim must exceed 2");
  if (topics == 0) fail("topics must be positive");
  if (noise < 0.0) fail("noise must be non-negative");
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  prob(entity_rate, "entity_rate");
  prob(accent_rate, "accent_rate");
  prob(accent_reveal, "accent_reveal");
  if (entity_rate + accent_rate >= 1.0) fail("entity_rate + accent_rate must be below 1");
  if (confusable_pairs > 0 && max_session_entities == 0) fail("max_session_entities must be positive");
}

bool CorpusSpec::is_homophone(std::int64_t token) const {
  return token >= homophone_begin() && token < confusable_begin();
}

bool CorpusSpec::is_confusable(std::int64_t token) const {
  return token >= confusable_begin() && token < accent_begin();
}

bool CorpusSpec::is_accent(std::int64_t token) const {
  return token >= accent_begin() && token <= static_cast<std::int64_t>(vocab_size);
}

CorpusSpec CorpusSpec::control(const CorpusSpec& base) {
  CorpusSpec c = base;
  c.entity_rate = 0.0;
  c.confusable_pairs = 0;
  c.accent_pairs = 0;
  c.accent_rate = 0.0;
  c.accent_reveal = 0.0;
  c.session_topic = false;
  return c;
}

std::map<std::string, std::string> corpus_spec_entries(const CorpusSpec& s) {
  auto num = [](auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {
      {"corpus.seed", num(s.seed)},
      {"corpus.vocab_size", num(s.vocab_size)},
      {"corpus.sessions", num(s.sessions)},
      {"corpus.first_session", num(s.first_session)},
      {"corpus.train_sessions", num(s.train_sessions)},
      {"corpus.dev_sessions", num(s.dev_sessions)},
      {"corpus.utterances_per_session", num(s.utterances_per_session)},
      {"corpus.min_tokens", num(s.min_tokens)},
      {"corpus.max_tokens", num(s.max_tokens)},
      {"corpus.min_frames_per_token", num(s.min_frames_per_token)},
      {"corpus.max_frames_per_token", num(s.max_frames_per_token)},
      {"corpus.feature_dim", num(s.feature_dim)},
      {"corpus.noise", num(s.noise)},
      {"corpus.topics", num(s.topics)},
      {"corpus.topic_sharpness", num(s.topic_sharpness)},
      {"corpus.homophone_pairs", num(s.homophone_pairs)},
      {"corpus.session_topic", s.session_topic ? "true" : "false"},
      {"corpus.entity_rate", num(s.entity_rate)},
      {"corpus.confusable_pairs", num(s.confusable_pairs)},
      {"corpus.max_session_entities", num(s.max_session_entities)},
      {"corpus.accent_pairs", num(s.accent_pairs)},
      {"corpus.accent_rate", num(s.accent_rate)},
      {"corpus.accent_reveal", num(s.accent_reveal)},
      {"corpus.accent_amplitude", num(s.accent_amplitude)},
  };
}

std::vector<std::string> apply_corpus_spec(const std::map<std::string, std::string>& entries, CorpusSpec& s) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto size_field = [](std::size_t& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = detail::parse_size(k, v); };
  };
  auto double_field = [](double& f) -> Setter {
    return [&f](const std::string& k, const std::string& v) { f = detail::parse_double(k, v); };
  };
  const std::map<std::string, Setter> setters{
      {"corpus.seed", [&](const std::string& k, const std::string& v) { s.seed = detail::parse_u64(k, v); }},
      {"corpus.vocab_size", size_field(s.vocab_size)},
      {"corpus.sessions", size_field(s.sessions)},
      {"corpus.first_session", size_field(s.first_session)},
      {"corpus.train_sessions", size_field(s.train_sessions)},
      {"corpus.dev_sessions", size_field(s.dev_sessions)},
      {"corpus.utterances_per_session", size_field(s.utterances_per_session)},
      {"corpus.min_tokens", size_field(s.min_tokens)},
      {"corpus.max_tokens", size_field(s.max_tokens)},
      {"corpus.min_frames_per_token", size_field(s.min_frames_per_token)},
      {"corpus.max_frames_per_token", size_field(s.max_frames_per_token)},
      {"corpus.feature_dim", size_field(s.feature_dim)},
      {"corpus.noise", double_field(s.noise)},
      {"corpus.topics", size_field(s.topics)},
      {"corpus.topic_sharpness", double_field(s.topic_sharpness)},
      {"corpus.homophone_pairs", size_field(s.homophone_pairs)},
      {"corpus.session_topic",
       [&](const std::string& k, const std::string& v) { s.session_topic = detail::parse_bool(k, v); }},
      {"corpus.entity_rate", double_field(s.entity_rate)},
      {"corpus.confusable_pairs", size_field(s.confusable_pairs)},
      {"corpus.max_session_entities", size_field(s.max_session_entities)},
      {"corpus.accent_pairs", size_field(s.accent_pairs)},
      {"corpus.accent_rate", double_field(s.accent_rate)},
      {"corpus.accent_reveal", double_field(s.accent_reveal)},
      {"corpus.accent_amplitude", double_field(s.accent_amplitude)},
  };
  std::vector<std::string> unknown;
  for (const auto& [k, v] : entries) {
    if (auto it = setters.find(k); it != setters.end()) {
      it->second(k, v);
    } else if (k.rfind("corpus.", 0) == 0) {
      unknown.push_back(k);
    }
  }
  return unknown;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

// -- generator -------------------------------------------------------------------------

CorpusModel::CorpusModel(const CorpusSpec& s) : spec(s) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, kTableStream));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const std::size_t pdim = spec.feature_dim - kPrototypeOffset;
  prototypes.assign(spec.vocab_size + 1, std::vector<float>(pdim, 0.0f));
  for (std::size_t v = 1; v <= spec.vocab_size; ++v) {
    for (auto& x : prototypes[v]) x = normal(rng);
  }
  // Homophone and confusable partners sit within noise/10 of each other.
  const float jitter = static_cast<float>(spec.noise / 10.0);
  auto pair_up = [&](std::int64_t begin, std::size_t pairs) {
    for (std::size_t i = 0; i < pairs; ++i) {
      const auto a = static_cast<std::size_t>(begin) + 2 * i;
      for (std::size_t d = 0; d < pdim; ++d) prototypes[a + 1][d] = prototypes[a][d] + jitter * normal(rng);
    }
  };
  pair_up(spec.homophone_begin(), spec.homophone_pairs);
  pair_up(spec.confusable_begin(), spec.confusable_pairs);

  const std::size_t c = spec.common_tokens();
  bigram.assign(spec.topics, std::vector<std::vector<double>>(c + 1, std::vector<double>(c, 0.0)));
  for (auto& topic : bigram) {
    for (auto& row : topic) {
      double z = 0.0;
      for (auto& p : row) {
        p = std::exp(spec.topic_sharpness * normal(rng));
        z += p;
      }
      for (auto& p : row) p /= z;
    }
  }
}

const std::vector<float>& CorpusModel::prototype(std::int64_t token, int accent) const {
  if (accent < 0 && spec.is_accent(token)) {
    const std::int64_t offset = token - spec.accent_begin();
    return prototypes[static_cast<std::size_t>(token + (offset % 2 == 0 ? 1 : -1))];
  }
  return prototypes[static_cast<std::size_t>(token)];
}

std::vector<double> CorpusModel::next_token(std::size_t topic, const std::vector<std::int64_t>& entities,
                                            std::int64_t prev) const {
  const std::size_t c = spec.common_tokens();
  std::vector<double> p(spec.vocab_size + 1, 0.0);
  const double entity_mass = entities.empty() ? 0.0 : spec.entity_rate;
  const double accent_mass = spec.accent_pairs == 0 ? 0.0 : spec.accent_rate;
  const double common_mass = 1.0 - entity_mass - accent_mass;
  const bool prev_common = prev >= 1 && prev <= static_cast<std::int64_t>(c);
  const auto& row = bigram[topic][prev_common ? static_cast<std::size_t>(prev - 1) : c];
  for (std::size_t i = 0; i < c; ++i) p[i + 1] = common_mass * row[i];
  for (std::int64_t e : entities) p[static_cast<std::size_t>(e)] += entity_mass / static_cast<double>(entities.size());
  for (std::size_t i = 0; i < 2 * spec.accent_pairs; ++i) {
    p[static_cast<std::size_t>(spec.accent_begin()) + i] = accent_mass / static_cast<double>(2 * spec.accent_pairs);
  }
  // Immediate repeats are excluded: frame-level features cannot separate them.
  if (prev > 0) p[static_cast<std::size_t>(prev)] = 0.0;
  double z = 0.0;
  for (double x : p) z += x;
  for (double& x : p) x /= z;
  return p;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  Corpus corpus{CorpusModel(spec), {}};
  const CorpusModel& m = corpus.model;
  const std::size_t D = spec.feature_dim;
  corpus.sessions.reserve(spec.sessions);
  for (std::size_t si = 0; si < spec.sessions; ++si) {
    std::mt19937_64 rng(derive_seed(spec.seed, spec.first_session + si));
    CorpusSession s;
    s.id = session_name(spec.first_session + si);
    s.split = si < spec.train_sessions                         ? Split::kTrain
              : si < spec.train_sessions + spec.dev_sessions ? Split::kDev
                                                             : Split::kTest;
    s.topic = uniform_index(rng, 0, spec.topics - 1);
    s.accent = std::bernoulli_distribution(0.5)(rng) ? 1 : -1;
    if (spec.confusable_pairs > 0) {
      const std::size_t k = uniform_index(rng, 1, std::min(spec.max_session_entities, spec.confusable_pairs));
      std::vector<std::size_t> pairs(spec.confusable_pairs);
      for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = i;
      std::shuffle(pairs.begin(), pairs.end(), rng);
      pairs.resize(k);
      std::sort(pairs.begin(), pairs.end());
      for (std::size_t pi : pairs) {
        const std::int64_t member = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
        s.entities.push_back(spec.confusable_begin() + static_cast<std::int64_t>(2 * pi) + member);
      }
    }
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise));
    for (std::size_t ui = 0; ui < spec.utterances_per_session; ++ui) {
      CorpusUtterance u;
      u.utt_index = ui;
      u.topic = spec.session_topic ? s.topic : uniform_index(rng, 0, spec.topics - 1);
      u.reveals_accent = std::bernoulli_distribution(spec.accent_reveal)(rng);
      const std::size_t len = uniform_index(rng, spec.min_tokens, spec.max_tokens);
      std::int64_t prev = 0;
      for (std::size_t j = 0; j < len; ++j) {
        prev = static_cast<std::int64_t>(sample(m.next_token(u.topic, s.entities, prev), rng));
        u.tokens.push_back(prev);
      }
      std::vector<std::size_t> durations(len);
      std::size_t frames = 0;
      for (auto& d : durations) {
        d = uniform_index(rng, spec.min_frames_per_token, spec.max_frames_per_token);
        frames += d;
      }
      u.features = FeatureMatrix(frames, D);
      const float cue = u.reveals_accent ? static_cast<float>(spec.accent_amplitude * s.accent) : 0.0f;
      std::size_t t = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const auto& proto = m.prototype(u.tokens[j], s.accent);
        for (std::size_t f = 0; f < durations[j]; ++f, ++t) {
          u.features.at(t, kOnsetDim) = (f == 0 ? 1.0f : 0.0f) + noise(rng);
          u.features.at(t, kAccentDim) = cue + noise(rng);
          for (std::size_t d = 0; d < proto.size(); ++d) {
            u.features.at(t, kPrototypeOffset + d) = proto[d] + noise(rng);
          }
        }
      }
      s.utterances.push_back(std::move(u));
    }
    corpus.sessions.push_back(std::move(s));
  }
  return corpus;
}

std::string tokens_to_text(const LabelSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += 'w' + std::to_string(tokens[i]);
  }
  return out;
}

// -- manifests -------------------------------------------------------------------------

namespace {

nlohmann::json record_json(const ManifestRecord& r) {
  return {{"session_id", r.session_id},
          {"utt_index", r.utt_index},
          {"feature_file", r.feature_file},
          {"tokens", r.tokens},
          {"text", r.text}};
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << record_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "feats");
  std::map<Split, std::vector<ManifestRecord>> split_records;
  for (const auto& s : corpus.sessions) {
    for (const auto& u : s.utterances) {
      ManifestRecord r;
      r.session_id = s.id;
      r.utt_index = u.utt_index;
      r.feature_file = "feats/" + s.id + "-" + std::to_string(u.utt_index) + ".lfnt";
      r.tokens = u.tokens;
      r.text = tokens_to_text(u.tokens);
      write_features(out_dir / r.feature_file, u.features);
      split_records[s.split].push_back(std::move(r));
    }
  }
  for (Split sp : {Split::kTrain, Split::kDev, Split::kTest}) {
    write_manifest(out_dir / (std::string(to_string(sp)) + ".jsonl"), split_records[sp]);
  }
  write_config_file(out_dir / "corpus.conf", corpus_spec_entries(corpus.model.spec));
}

void write_text_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<ManifestRecord> records;
  for (const auto& s : corpus.sessions) {
    for (const auto& u : s.utterances) {
      records.push_back({s.id, u.utt_index, "", u.tokens, tokens_to_text(u.tokens)});
    }
  }
  write_manifest(path, records);
}

std::vector<ManifestSession> split_sessions(const Corpus& corpus, Split split) {
  std::vector<ManifestSession> out;
  for (const auto& s : corpus.sessions) {
    if (s.split != split) continue;
    ManifestSession ms;
    ms.id = s.id;
    for (const auto& u : s.utterances) {
      ms.records.push_back({s.id, u.utt_index, "feats/" + s.id + "-" + std::to_string(u.utt_index) + ".lfnt", u.tokens,
                            tokens_to_text(u.tokens)});
      ms.features.push_back(std::make_shared<const FeatureMatrix>(u.features));
    }
    out.push_back(std::move(ms));
  }
  return out;
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.session_id = j.at("session_id").get<std::string>();
      r.utt_index = j.at("utt_index").get<std::size_t>();
      r.feature_file = j.value("feature_file", std::string());
      r.tokens = j.at("tokens").get<LabelSequence>();
      r.text = j.value("text", std::string());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ManifestSession> load_sessions(const std::vector<ManifestRecord>& records,
                                           const std::filesystem::path& base_dir, bool load_features) {
  std::vector<ManifestSession> sessions;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.emplace(r.session_id, sessions.size());
    if (inserted) sessions.push_back({r.session_id, {}, {}});
    sessions[it->second].records.push_back(r);
  }
  for (auto& s : sessions) {
    std::sort(s.records.begin(), s.records.end(),
              [](const ManifestRecord& a, const ManifestRecord& b) { return a.utt_index < b.utt_index; });
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      if (s.records[i].utt_index != i) {
        throw FormatError("session " + s.id + ": utterance indices are not 0.." +
                          std::to_string(s.records.size() - 1));
      }
      if (load_features && !s.records[i].feature_file.empty()) {
        s.features.push_back(std::make_shared<const FeatureMatrix>(read_features(base_dir / s.records[i].feature_file)));
      } else {
        s.features.push_back(nullptr);
      }
    }
  }
  return sessions;
}

// -- oracles ---------------------------------------------------------------------------

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Exact Bayesian predictive over the session latent (topic, active members).
class TextPosterior {
 public:
  explicit TextPosterior(const CorpusModel& m) : m_(m) {
    const auto& s = m.spec;
    std::vector<std::vector<std::int64_t>> configs;
    std::vector<double> config_prior;
    if (s.confusable_pairs == 0) {
      configs.push_back({});
      config_prior.push_back(1.0);
    } else {
      const std::size_t kmax = std::min(s.max_session_entities, s.confusable_pairs);
      for (std::size_t mask = 1; mask < (1u << s.confusable_pairs); ++mask) {
        const auto k = static_cast<std::size_t>(__builtin_popcountll(mask));
        if (k > kmax) continue;
        double combos = 1.0;  // C(P, k)
        for (std::size_t i = 0; i < k; ++i) combos = combos * static_cast<double>(s.confusable_pairs - i) / static_cast<double>(i + 1);
        for (std::size_t bits = 0; bits < (1u << k); ++bits) {
          std::vector<std::int64_t> ent;
          std::size_t b = 0;
          for (std::size_t p = 0; p < s.confusable_pairs; ++p) {
            if (!(mask >> p & 1u)) continue;
            ent.push_back(s.confusable_begin() + static_cast<std::int64_t>(2 * p) + ((bits >> b++) & 1u));
          }
          configs.push_back(std::move(ent));
          config_prior.push_back(1.0 / (static_cast<double>(kmax) * combos * static_cast<double>(1u << k)));
        }
      }
    }
    const std::size_t topics = s.session_topic ? s.topics : 1;
    for (std::size_t c = 0; c < configs.size(); ++c) {
      for (std::size_t t = 0; t < topics; ++t) {
        states_.push_back({configs[c], t});
        log_prior_.push_back(std::log(config_prior[c] / static_cast<double>(topics)));
      }
    }
  }

  /// log P(state | history transcripts), unnormalised.
  std::vector<double> history_weights(const std::vector<const LabelSequence*>& history) const {
    std::vector<double> w = log_prior_;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      for (const auto* utt : history) w[i] += utterance_loglik(i, *utt);
    }
    return w;
  }

  /// -log P(y_j | y_<j, history) for every position of `utt`, plus the
  /// predictive distribution before each token.
  std::vector<std::vector<double>> predictive(const std::vector<double>& state_w, const LabelSequence& utt) const {
    const auto& s = m_.spec;
    const std::size_t topics = s.session_topic ? 1 : s.topics;
    // Joint weights over (state, utterance topic).
    std::vector<double> w;
    std::vector<std::pair<std::size_t, std::size_t>> idx;
    for (std::size_t i = 0; i < states_.size(); ++i) {
      for (std::size_t k = 0; k < topics; ++k) {
        w.push_back(state_w[i] - std::log(static_cast<double>(topics)));
        idx.emplace_back(i, s.session_topic ? states_[i].topic : k);
      }
    }
    std::vector<std::vector<double>> out;
    std::int64_t prev = 0;
    for (std::int64_t y : utt) {
      const double z = log_sum_exp(w);
      std::vector<double> pred(s.vocab_size + 1, 0.0);
      for (std::size_t a = 0; a < w.size(); ++a) {
        const double pa = std::exp(w[a] - z);
        if (pa == 0.0) continue;
        const auto p = m_.next_token(idx[a].second, states_[idx[a].first].entities, prev);
        for (std::size_t v = 0; v < p.size(); ++v) pred[v] += pa * p[v];
        w[a] += std::log(p[static_cast<std::size_t>(y)]);
      }
      out.push_back(std::move(pred));
      prev = y;
    }
    return out;
  }

 private:
  struct State {
    std::vector<std::int64_t> entities;
    std::size_t topic;
  };

  double utterance_loglik(std::size_t state, const LabelSequence& utt) const {
    const auto& s = m_.spec;
    auto given_topic = [&](std::size_t topic) {
      double ll = 0.0;
      std::int64_t prev = 0;
      for (std::int64_t y : utt) {
        ll += std::log(m_.next_token(topic, states_[state].entities, prev)[static_cast<std::size_t>(y)]);
        prev = y;
      }
      return ll;
    };
    if (s.session_topic) return given_topic(states_[state].topic);
    std::vector<double> per_topic;
    for (std::size_t k = 0; k < s.topics; ++k) per_topic.push_back(given_topic(k) - std::log(static_cast<double>(s.topics)));
    return log_sum_exp(per_topic);
  }

  const CorpusModel& m_;
  std::vector<State> states_;
  std::vector<double> log_prior_;
};

double accent_evidence(const FeatureMatrix& f) {
  double sum = 0.0;
  for (std::size_t t = 0; t < f.frames; ++t) sum += f.at(t, kAccentDim);
  return sum;
}

}  // namespace

OracleReport corpus_oracles(const Corpus& corpus, Split split, std::size_t history) {
  const CorpusModel& m = corpus.model;
  const auto& spec = m.spec;
  TextPosterior posterior(m);
  OracleReport r;
  std::size_t tokens = 0, blind_err = 0, hist_err = 0, acc_cur = 0, acc_hist = 0;
  double nll_blind = 0.0, nll_hist = 0.0;
  const std::vector<double> no_history = posterior.history_weights({});
  for (const auto& s : corpus.sessions) {
    if (s.split != split) continue;
    for (std::size_t ui = 0; ui < s.utterances.size(); ++ui) {
      const auto& u = s.utterances[ui];
      std::vector<const LabelSequence*> hist;
      double evidence = accent_evidence(u.features);
      const double current_evidence = evidence;
      for (std::size_t h = ui > history ? ui - history : 0; h < ui; ++h) {
        hist.push_back(&s.utterances[h].tokens);
        evidence += accent_evidence(s.utterances[h].features);
      }
      const auto blind = posterior.predictive(no_history, u.tokens);
      const auto aware = posterior.predictive(posterior.history_weights(hist), u.tokens);
      bool has_accent = false;
      for (std::size_t j = 0; j < u.tokens.size(); ++j) {
        const std::int64_t y = u.tokens[j];
        const auto yi = static_cast<std::size_t>(y);
        nll_blind -= std::log(blind[j][yi]);
        nll_hist -= std::log(aware[j][yi]);
        ++tokens;
        has_accent = has_accent || spec.is_accent(y);
        if (spec.is_confusable(y)) {
          ++r.confusable_tokens;
          const std::int64_t first = y - (y - spec.confusable_begin()) % 2;
          auto pick = [&](const std::vector<double>& p) {
            const auto a = static_cast<std::size_t>(first);
            return p[a + 1] > p[a] ? first + 1 : first;
          };
          blind_err += pick(blind[j]) != y;
          hist_err += pick(aware[j]) != y;
        }
      }
      if (has_accent) {
        ++r.accent_utterances;
        acc_cur += (current_evidence >= 0.0 ? 1 : -1) == s.accent;
        acc_hist += (evidence >= 0.0 ? 1 : -1) == s.accent;
      }
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  r.confusable_error_blind = ratio(blind_err, r.confusable_tokens);
  r.confusable_error_history = ratio(hist_err, r.confusable_tokens);
  r.accent_accuracy_current = ratio(acc_cur, r.accent_utterances);
  r.accent_accuracy_history = ratio(acc_hist, r.accent_utterances);
  r.entropy_no_history = tokens ? nll_blind / static_cast<double>(tokens) : 0.0;
  r.entropy_history = tokens ? nll_hist / static_cast<double>(tokens) : 0.0;
  return r;
}

}  // namespace lfnt
