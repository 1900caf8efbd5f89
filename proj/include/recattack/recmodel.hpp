// SPDX-License-Identifier: Apache-2.0
/**
 * @file   recmodel.hpp
 * @brief  Reference sequential recommender: embedding lookup, decay-weighted
 *         mean encoder and a tied-embedding dot-product scorer, with
 *         closed-form gradients and an AdamW trainer.
 *
 * hidden(x) = sum_t w_t E[x_t],  w_t = gamma^(T-t) / sum_u gamma^(T-u)
 * score_i   = <hidden, E[i]> + b_i
 */
#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "recattack/common.hpp"
#include "recattack/corpus.hpp"

namespace recattack {

struct RecommenderParams {
  std::size_t num_items = 0;
  std::size_t dim = 0;
  double gamma = 0.8;
  std::vector<double> E;  // num_items x dim, row-major
  std::vector<double> b;  // num_items

  std::span<double> row(ItemId i) { return {E.data() + static_cast<std::size_t>(i) * dim, dim}; }
  std::span<const double> row(ItemId i) const {
    return {E.data() + static_cast<std::size_t>(i) * dim, dim};
  }

  bool operator==(const RecommenderParams&) const = default;
};

/// Item embeddings i.i.d. uniform in [-0.1, 0.1], zero biases.
inline RecommenderParams init_params(std::size_t num_items, std::size_t dim, double gamma,
                                     std::uint64_t seed) {
  if (num_items == 0 || dim == 0) throw ConfigError("model needs num_items >= 1 and dim >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("encoder decay gamma must lie in (0, 1]");
  RecommenderParams p;
  p.num_items = num_items;
  p.dim = dim;
  p.gamma = gamma;
  p.E.resize(num_items * dim);
  p.b.assign(num_items, 0.0);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& v : p.E) v = u(rng);
  return p;
}

/// T x dim matrix of looked-up embedding rows.
struct EmbeddedSequence {
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> rows;

  std::span<double> row(std::size_t t) { return {rows.data() + t * dim, dim}; }
  std::span<const double> row(std::size_t t) const { return {rows.data() + t * dim, dim}; }
};

inline void check_ids(const RecommenderParams& p, std::span<const ItemId> x) {
  for (ItemId id : x)
    if (id >= p.num_items)
      throw Error("item id " + std::to_string(id) + " out of range (V=" + std::to_string(p.num_items) + ")");
}

inline EmbeddedSequence embed(const RecommenderParams& p, std::span<const ItemId> x) {
  if (x.empty()) throw Error("cannot embed an empty sequence");
  check_ids(p, x);
  EmbeddedSequence z{x.size(), p.dim, std::vector<double>(x.size() * p.dim)};
  for (std::size_t t = 0; t < x.size(); ++t) {
    auto src = p.row(x[t]);
    std::copy(src.begin(), src.end(), z.row(t).begin());
  }
  return z;
}

/// Normalised encoder weights; the most recent position has the largest.
inline std::vector<double> encoder_weights(std::size_t length, double gamma) {
  std::vector<double> w(length);
  double acc = 1.0, total = 0.0;
  for (std::size_t t = length; t-- > 0;) {
    w[t] = acc;
    total += acc;
    acc *= gamma;
  }
  for (auto& v : w) v /= total;
  return w;
}

inline std::vector<double> encode(const RecommenderParams& p, const EmbeddedSequence& z) {
  if (z.length == 0) throw Error("cannot encode an empty sequence");
  const auto w = encoder_weights(z.length, p.gamma);
  std::vector<double> h(z.dim, 0.0);
  for (std::size_t t = 0; t < z.length; ++t) {
    auto r = z.row(t);
    for (std::size_t k = 0; k < z.dim; ++k) h[k] += w[t] * r[k];
  }
  return h;
}

/// Encodes directly from ids without materialising the embedded matrix.
inline std::vector<double> encode_ids(const RecommenderParams& p, std::span<const ItemId> x) {
  if (x.empty()) throw Error("cannot encode an empty sequence");
  check_ids(p, x);
  const auto w = encoder_weights(x.size(), p.gamma);
  std::vector<double> h(p.dim, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    auto r = p.row(x[t]);
    for (std::size_t k = 0; k < p.dim; ++k) h[k] += w[t] * r[k];
  }
  return h;
}

inline std::vector<double> score_all(const RecommenderParams& p, std::span<const double> hidden) {
  std::vector<double> s(p.num_items);
  for (std::size_t i = 0; i < p.num_items; ++i)
    s[i] = detail::dot(hidden, p.row(static_cast<ItemId>(i))) + p.b[i];
  return s;
}

inline std::vector<double> score_sequence(const RecommenderParams& p, std::span<const ItemId> x) {
  return score_all(p, encode_ids(p, x));
}

/// Gradient buffers shaped like RecommenderParams.
struct ParamGrads {
  std::vector<double> dE;
  std::vector<double> db;

  explicit ParamGrads(const RecommenderParams& p = {}) : dE(p.E.size(), 0.0), db(p.b.size(), 0.0) {}

  void zero() {
    std::fill(dE.begin(), dE.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
  }
};

/**
 * Accumulates into `grads` the parameter gradient implied by dL/ds_i for the
 * listed items (scorer path) plus the encoder path through E[x_t].
 * Returns dL/dhidden.
 */
inline std::vector<double> backprop_scores(const RecommenderParams& p, std::span<const ItemId> x,
                                           std::span<const double> hidden,
                                           std::span<const ItemId> items,
                                           std::span<const double> dscores, ParamGrads& grads) {
  const std::size_t d = p.dim;
  std::vector<double> dh(d, 0.0);
  for (std::size_t n = 0; n < items.size(); ++n) {
    const double g = dscores[n];
    if (g == 0.0) continue;
    const ItemId i = items[n];
    auto e = p.row(i);
    double* de = grads.dE.data() + static_cast<std::size_t>(i) * d;
    for (std::size_t k = 0; k < d; ++k) {
      de[k] += g * hidden[k];
      dh[k] += g * e[k];
    }
    grads.db[i] += g;
  }
  const auto w = encoder_weights(x.size(), p.gamma);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double* de = grads.dE.data() + static_cast<std::size_t>(x[t]) * d;
    for (std::size_t k = 0; k < d; ++k) de[k] += w[t] * dh[k];
  }
  return dh;
}

struct CeResult {
  double loss = 0.0;
  ParamGrads grads;
  /// dL / d(last row of the embedded sequence).
  std::vector<double> gpos;
};

/// Full-vocabulary cross-entropy of `target` given the embedded context.
inline double ce_loss_embedded(const RecommenderParams& p, const EmbeddedSequence& z, ItemId target) {
  const auto s = score_all(p, encode(p, z));
  return detail::log_sum_exp(s) - s[target];
}

inline CeResult ce_loss_and_grads(const RecommenderParams& p, std::span<const ItemId> x, ItemId target) {
  if (target >= p.num_items) throw Error("target id out of range");
  const auto h = encode_ids(p, x);
  const auto s = score_all(p, h);
  auto prob = detail::softmax(s);
  CeResult r{detail::log_sum_exp(s) - s[target], ParamGrads(p), {}};
  prob[target] -= 1.0;  // dL/ds
  std::vector<ItemId> all(p.num_items);
  std::iota(all.begin(), all.end(), ItemId{0});
  const auto dh = backprop_scores(p, x, h, all, prob, r.grads);
  const double w_last = encoder_weights(x.size(), p.gamma).back();
  r.gpos.resize(p.dim);
  for (std::size_t k = 0; k < p.dim; ++k) r.gpos[k] = w_last * dh[k];
  return r;
}

/// Softmax probability the model assigns to `target` after context x.
inline double target_probability(const RecommenderParams& p, std::span<const ItemId> x, ItemId target) {
  const auto s = score_sequence(p, x);
  return std::exp(s[target] - detail::log_sum_exp(s));
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// Ordered top-k list of distinct items.
struct RankedList {
  std::vector<ItemId> items;

  std::size_t size() const noexcept { return items.size(); }
  bool operator==(const RankedList&) const = default;
};

/**
 * Top-k items by descending score, ties by ascending id. History items are
 * kept unless `exclude_history` is set.
 */
inline RankedList recommend_topk(const RecommenderParams& p, std::span<const ItemId> x, std::size_t k,
                                 bool exclude_history = false) {
  if (k < 1 || k > p.num_items) throw ConfigError("recommend_topk needs 1 <= k <= V");
  auto s = score_sequence(p, x);
  if (exclude_history)
    for (ItemId id : x) s[id] = -std::numeric_limits<double>::infinity();
  return {detail::top_k_indices(s, k)};
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.001;
  double weight_decay = 0.01;
  std::size_t batch_size = 128;
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  /// Only the most recent items of a long prefix are encoded.
  std::size_t max_context = 50;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  }
};

/// Adam with decoupled weight decay over the flattened (E, b) parameters.
class AdamW {
 public:
  AdamW(const RecommenderParams& p, const TrainConfig& cfg)
      : cfg_(cfg), mE_(p.E.size(), 0.0), vE_(p.E.size(), 0.0), mb_(p.b.size(), 0.0), vb_(p.b.size(), 0.0) {}

  void step(RecommenderParams& p, const ParamGrads& g, double scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    update(p.E, g.dE, mE_, vE_, scale, c1, c2);
    update(p.b, g.db, mb_, vb_, scale, c1, c2);
  }

 private:
  void update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
              std::vector<double>& v, double scale, double c1, double c2) const {
    const double lr = cfg_.learning_rate;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= lr * cfg_.weight_decay * w[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
    }
  }

  TrainConfig cfg_;
  std::vector<double> mE_, vE_, mb_, vb_;
  std::uint64_t t_ = 0;
};

inline std::span<const ItemId> clip_context(std::span<const ItemId> x, std::size_t max_context) {
  if (max_context > 0 && x.size() > max_context) return x.subspan(x.size() - max_context);
  return x;
}

/**
 * Next-item cross-entropy training over every prefix of every training
 * sequence (predict x[t] from x[:t]). Deterministic given cfg.seed.
 */
inline RecommenderParams train(RecommenderParams p, const SplitDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  struct Example {
    std::uint32_t seq;
    std::uint32_t pos;
  };
  std::vector<Example> examples;
  for (std::size_t s = 0; s < data.train.size(); ++s)
    for (std::size_t t = 1; t < data.train[s].size(); ++t)
      examples.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t)});
  if (examples.empty()) throw Error("training split holds no (prefix, next item) pair");
  if (cfg.epochs == 0) return p;

  Rng rng(cfg.seed);
  AdamW opt(p, cfg);
  ParamGrads grads(p);
  std::vector<ItemId> all(p.num_items);
  std::iota(all.begin(), all.end(), ItemId{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(examples.begin(), examples.end(), rng);
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(examples.size(), start + cfg.batch_size);
      grads.zero();
      for (std::size_t e = start; e < end; ++e) {
        const auto& seq = data.train[examples[e].seq];
        auto x = clip_context(std::span<const ItemId>(seq.data(), examples[e].pos), cfg.max_context);
        const ItemId target = seq[examples[e].pos];
        const auto h = encode_ids(p, x);
        auto prob = detail::softmax(score_all(p, h));
        const double loss = -std::log(prob[target]);
        if (!std::isfinite(loss))
          throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", example " +
                             std::to_string(e));
        prob[target] -= 1.0;
        backprop_scores(p, x, h, all, prob, grads);
      }
      opt.step(p, grads, 1.0 / static_cast<double>(end - start));
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr std::string_view kParamsMagic = "RECATTACK-PARAMS v1";

/// Text format: magic line, "V d gamma", then E row by row, then b.
inline void write_params(const RecommenderParams& p, std::ostream& out) {
  out << kParamsMagic << '\n'
      << p.num_items << ' ' << p.dim << ' ' << detail::format_double(p.gamma) << '\n';
  for (std::size_t i = 0; i < p.num_items; ++i) {
    for (std::size_t k = 0; k < p.dim; ++k) {
      if (k) out << ' ';
      out << detail::format_double(p.E[i * p.dim + k]);
    }
    out << '\n';
  }
  for (std::size_t i = 0; i < p.num_items; ++i) {
    if (i) out << ' ';
    out << detail::format_double(p.b[i]);
  }
  out << '\n';
}

inline RecommenderParams read_params(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kParamsMagic) throw ParseError(1, "missing parameter file magic");
  RecommenderParams p;
  std::string gamma;
  if (!(in >> p.num_items >> p.dim >> gamma)) throw ParseError(2, "bad parameter header");
  p.gamma = detail::parse_double(gamma);
  p.E.resize(p.num_items * p.dim);
  p.b.resize(p.num_items);
  std::string tok;
  for (auto& v : p.E) {
    if (!(in >> tok)) throw Error("truncated parameter file (embeddings)");
    v = detail::parse_double(tok);
  }
  for (auto& v : p.b) {
    if (!(in >> tok)) throw Error("truncated parameter file (biases)");
    v = detail::parse_double(tok);
  }
  return p;
}

inline void save_params(const RecommenderParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_params(p, out);
}

inline RecommenderParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_params(in);
}

inline std::string params_fingerprint(const RecommenderParams& p) {
  std::ostringstream os;
  write_params(p, os);
  return detail::hex64(detail::fnv1a(os.str()));
}

}  // namespace recattack
