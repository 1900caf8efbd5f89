// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Experiment configuration and its flat `section.key = value` text
 *         form. Every field is reachable through one registry so config
 *         files, command-line flags and the config echo stay in sync.
 */
#pragma once

#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "recattack/attack.hpp"
#include "recattack/corpus.hpp"
#include "recattack/distill.hpp"
#include "recattack/recmodel.hpp"
#include "recattack/synthetic.hpp"
#include "recattack/synthgen.hpp"

namespace recattack {

inline constexpr const char* kAllStages = "corpus,victim,synthesize,distill,attack,evaluate";

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  std::string stages = kAllStages;
  std::string arm = "default";

  // corpus
  std::string corpus_source = "synthetic";  // synthetic | file
  std::string corpus_path;
  CorpusFormat corpus_format = CorpusFormat::sequence_lines;
  SyntheticSpec synthetic;

  // victim
  std::size_t victim_dim = 32;
  double victim_gamma = 0.8;
  TrainConfig victim_train{0.01, 0.01, 128, 10, 0.9, 0.999, 1e-8, 0, 50};

  // oracle; budget 0 means 20 * count * maxlen
  std::size_t oracle_k = 100;
  std::uint64_t oracle_budget = 20000;

  // query synthesis
  SamplerPolicy sampler = SamplerPolicy::position_decay(0.9);
  std::size_t synth_count = 1000;
  std::size_t synth_maxlen = 20;

  DistillConfig distill = [] {
    DistillConfig d;
    d.train = TrainConfig{0.01, 0.01, 128, 10, 0.9, 0.999, 1e-8, 0, 50};
    return d;
  }();

  // attack
  std::size_t attack_users = 50;
  std::size_t attack_targets = 5;
  double attack_length_factor = 1.1;
  std::size_t attack_window = 5;
  bool attack_stealth_compare = true;
  AttackConfig attack;

  // evaluation
  std::size_t eval_k = 10;
  std::string eval_ks = "5,10,20";

  std::uint64_t effective_budget() const {
    return oracle_budget ? oracle_budget : 20ULL * synth_count * synth_maxlen;
  }

  std::vector<std::size_t> eval_cutoffs() const {
    std::set<std::size_t> ks{eval_k};
    std::stringstream ss(eval_ks);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) ks.insert(detail::parse_int<std::size_t>(tok));
    return {ks.begin(), ks.end()};
  }

  std::set<std::string> stage_set() const {
    std::set<std::string> out;
    std::stringstream ss(stages);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.insert(tok);
    return out;
  }

  void validate() const {
    static const std::set<std::string> known{"corpus", "victim", "synthesize", "distill", "attack", "evaluate"};
    for (const auto& s : stage_set())
      if (!known.count(s)) throw ConfigError("unknown stage '" + s + "'");
    if (corpus_source != "synthetic" && corpus_source != "file")
      throw ConfigError("corpus.source must be 'synthetic' or 'file'");
    if (corpus_source == "file" && corpus_path.empty()) throw ConfigError("corpus.path is required for file corpora");
    if (corpus_source == "synthetic") synthetic.validate();
    if (victim_dim < 1) throw ConfigError("victim.dim must be >= 1");
    if (!(victim_gamma > 0.0 && victim_gamma <= 1.0)) throw ConfigError("victim.gamma must lie in (0, 1]");
    victim_train.validate();
    if (oracle_k < 1) throw ConfigError("oracle.k must be >= 1");
    sampler.validate();
    if (synth_maxlen < 2) throw ConfigError("synth.maxlen must be >= 2");
    distill.validate();
    attack.validate();
    if (!(attack_length_factor > 1.0)) throw ConfigError("attack.length_factor must be > 1");
    if (attack_window < 1) throw ConfigError("attack.window must be >= 1");
    if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
    for (auto k : eval_cutoffs())
      if (k < 1 || k > oracle_k) throw ConfigError("eval cut-offs must lie in [1, oracle.k]");
  }
};

/// One addressable configuration field.
struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

namespace detail {

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

#define RECATTACK_FIELD(KEY, HELP, EXPR, TYPE)                                                     \
  ConfigField {                                                                                        \
    KEY, HELP, [](const ExperimentConfig& c) { return to_text(c.EXPR); },                              \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = from_text<TYPE>(v, KEY); }            \
  }

inline std::string to_text(double v) { return format_double(v); }
inline std::string to_text(bool v) { return v ? "true" : "false"; }
inline std::string to_text(const std::string& v) { return v; }
template <typename Int>
  requires std::is_integral_v<Int>
inline std::string to_text(Int v) {
  return std::to_string(v);
}

template <typename T>
T from_text(const std::string& v, const char* key) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      return parse_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return parse_bool(v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      return parse_int<T>(v);
    }
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace detail

/// All configuration keys in canonical (echo) order.
inline const std::vector<ConfigField>& config_fields() {
  using namespace detail;
  static const std::vector<ConfigField> fields = {
      RECATTACK_FIELD("seed", "global seed", seed, std::uint64_t),
      RECATTACK_FIELD("output.dir", "artifact directory", output_dir, std::string),
      RECATTACK_FIELD("stages", "comma-separated enabled stages", stages, std::string),
      RECATTACK_FIELD("arm", "ablation arm label", arm, std::string),

      RECATTACK_FIELD("corpus.source", "synthetic | file", corpus_source, std::string),
      RECATTACK_FIELD("corpus.path", "interaction file", corpus_path, std::string),
      ConfigField{"corpus.format", "sequence_lines | tsv_triples",
                  [](const ExperimentConfig& c) {
                    return std::string(c.corpus_format == CorpusFormat::sequence_lines ? "sequence_lines"
                                                                                       : "tsv_triples");
                  },
                  [](ExperimentConfig& c, const std::string& v) { c.corpus_format = parse_corpus_format(v); }},
      RECATTACK_FIELD("synthetic.items", "vocabulary size", synthetic.items, std::size_t),
      RECATTACK_FIELD("synthetic.users", "number of users", synthetic.users, std::size_t),
      RECATTACK_FIELD("synthetic.groups", "latent item groups", synthetic.groups, std::size_t),
      RECATTACK_FIELD("synthetic.p_stay", "within-group transition probability", synthetic.p_stay, double),
      RECATTACK_FIELD("synthetic.min_length", "minimum sequence length", synthetic.min_length, std::size_t),
      RECATTACK_FIELD("synthetic.max_length", "maximum sequence length", synthetic.max_length, std::size_t),
      RECATTACK_FIELD("synthetic.mean_length", "mean sequence length", synthetic.mean_length, double),
      RECATTACK_FIELD("synthetic.zipf", "within-group popularity exponent", synthetic.zipf_exponent, double),

      RECATTACK_FIELD("victim.dim", "embedding dimension", victim_dim, std::size_t),
      RECATTACK_FIELD("victim.gamma", "encoder decay", victim_gamma, double),
      RECATTACK_FIELD("victim.lr", "learning rate", victim_train.learning_rate, double),
      RECATTACK_FIELD("victim.weight_decay", "decoupled weight decay", victim_train.weight_decay, double),
      RECATTACK_FIELD("victim.batch_size", "mini-batch size", victim_train.batch_size, std::size_t),
      RECATTACK_FIELD("victim.epochs", "training epochs", victim_train.epochs, std::size_t),
      RECATTACK_FIELD("victim.beta1", "first-moment decay", victim_train.beta1, double),
      RECATTACK_FIELD("victim.beta2", "second-moment decay", victim_train.beta2, double),
      RECATTACK_FIELD("victim.eps", "optimizer epsilon", victim_train.adam_eps, double),
      RECATTACK_FIELD("victim.max_context", "encoded prefix cap", victim_train.max_context, std::size_t),

      RECATTACK_FIELD("oracle.k", "black-box list length", oracle_k, std::size_t),
      RECATTACK_FIELD("oracle.budget", "query budget (0 = 20*count*maxlen)", oracle_budget, std::uint64_t),

      ConfigField{"synth.policy", "position_decay | rank_temperature | uniform",
                  [](const ExperimentConfig& c) { return std::string(to_string(c.sampler.kind)); },
                  [](ExperimentConfig& c, const std::string& v) { c.sampler.kind = parse_sampler_kind(v); }},
      RECATTACK_FIELD("synth.param", "sampler decay or temperature", sampler.param, double),
      RECATTACK_FIELD("synth.count", "generated sequences", synth_count, std::size_t),
      RECATTACK_FIELD("synth.maxlen", "generated sequence length", synth_maxlen, std::size_t),

      RECATTACK_FIELD("distill.alpha", "position decay of the soft labels", distill.alpha, double),
      RECATTACK_FIELD("distill.tau_b", "black-box temperature", distill.tau_b, double),
      RECATTACK_FIELD("distill.tau_w", "surrogate temperature", distill.tau_w, double),
      RECATTACK_FIELD("distill.lambda", "pairwise weight", distill.lambda, double),
      RECATTACK_FIELD("distill.delta1", "adjacent margin", distill.delta1, double),
      RECATTACK_FIELD("distill.delta2", "negative margin", distill.delta2, double),
      RECATTACK_FIELD("distill.negatives", "negatives per ranked position", distill.negatives_per_position,
                          std::size_t),
      RECATTACK_FIELD("distill.dim", "surrogate embedding dimension", distill.dim, std::size_t),
      RECATTACK_FIELD("distill.gamma", "surrogate encoder decay", distill.gamma, double),
      RECATTACK_FIELD("distill.lr", "learning rate", distill.train.learning_rate, double),
      RECATTACK_FIELD("distill.weight_decay", "decoupled weight decay", distill.train.weight_decay, double),
      RECATTACK_FIELD("distill.batch_size", "mini-batch size", distill.train.batch_size, std::size_t),
      RECATTACK_FIELD("distill.epochs", "training epochs", distill.train.epochs, std::size_t),
      RECATTACK_FIELD("distill.beta1", "first-moment decay", distill.train.beta1, double),
      RECATTACK_FIELD("distill.beta2", "second-moment decay", distill.train.beta2, double),
      RECATTACK_FIELD("distill.eps", "optimizer epsilon", distill.train.adam_eps, double),
      RECATTACK_FIELD("distill.max_context", "encoded prefix cap", distill.train.max_context, std::size_t),

      RECATTACK_FIELD("attack.users", "attacked users per target", attack_users, std::size_t),
      RECATTACK_FIELD("attack.targets", "random unpopular targets", attack_targets, std::size_t),
      RECATTACK_FIELD("attack.length_factor", "polluted length / original length", attack_length_factor,
                          double),
      RECATTACK_FIELD("attack.epsilon", "signed gradient step", attack.epsilon, double),
      RECATTACK_FIELD("attack.candidates", "candidates per step (n)", attack.candidates, std::size_t),
      RECATTACK_FIELD("attack.neighbors", "neighbour size (K)", attack.neighbors, std::size_t),
      RECATTACK_FIELD("attack.w_grad", "gradient weight w_g (w_s = 1 - w_g)", attack.w_grad, double),
      ConfigField{"attack.kind", "jaccard | ppmi",
                  [](const ExperimentConfig& c) { return std::string(to_string(c.attack.kind)); },
                  [](ExperimentConfig& c, const std::string& v) { c.attack.kind = parse_corel_kind(v); }},
      RECATTACK_FIELD("attack.window", "co-occurrence window", attack_window, std::size_t),
      ConfigField{"attack.gradient_mode", "placeholder | averaged",
                  [](const ExperimentConfig& c) {
                    return std::string(c.attack.gradient_mode == GradientMode::placeholder ? "placeholder"
                                                                                           : "averaged");
                  },
                  [](ExperimentConfig& c, const std::string& v) {
                    if (v == "placeholder")
                      c.attack.gradient_mode = GradientMode::placeholder;
                    else if (v == "averaged")
                      c.attack.gradient_mode = GradientMode::averaged;
                    else
                      throw ConfigError("attack.gradient_mode: unknown mode '" + v + "'");
                  }},
      RECATTACK_FIELD("attack.refine", "re-run failed validations once", attack.refine, bool),
      RECATTACK_FIELD("attack.refine_step", "w_g increase on refinement", attack.refine_step, double),
      RECATTACK_FIELD("attack.stealth_compare", "also build gradient-only sequences", attack_stealth_compare,
                          bool),

      RECATTACK_FIELD("eval.k", "headline cut-off", eval_k, std::size_t),
      RECATTACK_FIELD("eval.ks", "additional cut-offs", eval_ks, std::string),
  };
  return fields;
}

#undef RECATTACK_FIELD

inline const ConfigField& find_field(std::string_view key) {
  for (const auto& f : config_fields())
    if (f.key == key) return f;
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

inline void set_config_value(ExperimentConfig& cfg, std::string_view key, const std::string& value) {
  find_field(key).set(cfg, value);
}

/// Applies `key = value` lines; '#' starts a comment. `[section]` headers
/// prefix the keys that follow them.
inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set_config_value(cfg, key, trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(cfg, in);
}

/// Canonical `key = value` dump; re-applying it reproduces the config.
/// `output.dir` is left out unless asked for, since it does not change results.
inline std::string config_echo(const ExperimentConfig& cfg, bool with_location = false) {
  std::string out;
  for (const auto& f : config_fields()) {
    if (!with_location && f.key == "output.dir") continue;
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return detail::hex64(detail::fnv1a(config_echo(cfg))); }

/// Stable per-stage seed derived from the global seed.
inline std::uint64_t derive_seed(std::uint64_t global, std::string_view label) {
  return detail::fnv1a(std::string(label) + ":" + std::to_string(global));
}

}  // namespace recattack
