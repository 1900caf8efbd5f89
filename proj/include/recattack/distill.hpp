// SPDX-License-Identifier: Apache-2.0
/**
 * @file   distill.hpp
 * @brief  Position-decay soft labels reconstructed from top-k rankings, the
 *         KL / pairwise-hinge / combined distillation losses with their
 *         gradients, and surrogate training on a query set.
 */
#pragma once

#include <map>
#include <string>
#include <vector>

#include "recattack/oracle.hpp"
#include "recattack/recmodel.hpp"

namespace recattack {

/// Probability vector over ranked positions 1..k.
struct CognitiveDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
};

struct DistillConfig {
  double alpha = 0.97;   // position decay of the prior
  double tau_b = 0.5;    // temperature of the black-box soft labels
  double tau_w = 1.0;    // temperature of the surrogate distribution
  double lambda = 0.5;   // weight of the pairwise term
  double delta1 = 0.1;   // adjacent-rank margin
  double delta2 = 0.5;   // ranked-vs-negative margin
  std::size_t negatives_per_position = 1;
  std::size_t dim = 32;
  double gamma = 0.8;
  TrainConfig train;
  std::uint64_t seed = 7;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
    if (!(tau_b > 0.0) || !(tau_w > 0.0)) throw ConfigError("temperatures must be > 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
    if (!(delta1 > 0.0) || !(delta2 > 0.0)) throw ConfigError("margins must be > 0");
    if (negatives_per_position < 1) throw ConfigError("negatives per position must be >= 1");
    train.validate();
  }
};

/// v_j = alpha^(j-1), j = 1..k.
inline std::vector<double> cognitive_prior(std::size_t k, double alpha) {
  if (k < 1) throw ConfigError("k must be >= 1");
  std::vector<double> v(k);
  double acc = 1.0;
  for (auto& x : v) {
    x = acc;
    acc *= alpha;
  }
  return v;
}

inline CognitiveDistribution cognitive_distribution(std::size_t k, double alpha, double tau_b) {
  if (!(tau_b > 0.0)) throw ConfigError("tau_b must be > 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  return {detail::softmax(cognitive_prior(k, alpha), tau_b)};
}

/// True iff the prior and the NDCG discount 1/log2(j+1) are both strictly
/// decreasing over positions 1..k.
inline bool rank_equivalence_check(std::size_t k, double alpha) {
  const auto v = cognitive_prior(k, alpha);
  for (std::size_t j = 1; j < k; ++j) {
    const double d_prev = 1.0 / std::log2(static_cast<double>(j) + 1.0);
    const double d_next = 1.0 / std::log2(static_cast<double>(j) + 2.0);
    if (!(v[j - 1] > v[j]) || !(d_prev > d_next)) return false;
  }
  return true;
}

inline CognitiveDistribution surrogate_distribution(std::span<const double> scores, double tau_w) {
  if (!(tau_w > 0.0)) throw ConfigError("tau_w must be > 0");
  return {detail::softmax(scores, tau_w)};
}

struct KlResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d surrogate score
};

/// KL(p_b || p_w); the gradient is taken through p_w = softmax(s / tau_w).
inline KlResult kl_loss(const CognitiveDistribution& pb, const CognitiveDistribution& pw, double tau_w) {
  if (pb.size() != pw.size()) throw Error("kl_loss: distributions differ in length");
  KlResult r{0.0, std::vector<double>(pb.size())};
  for (std::size_t j = 0; j < pb.size(); ++j) {
    if (pb.probs[j] > 0.0) r.loss += pb.probs[j] * std::log(pb.probs[j] / pw.probs[j]);
    r.grad[j] = (pw.probs[j] - pb.probs[j]) / tau_w;
  }
  return r;
}

struct PairwiseResult {
  double loss = 0.0;
  std::vector<double> grad;      // w.r.t. ranked-item scores
  std::vector<double> grad_neg;  // w.r.t. negative scores
};

/**
 * Mean adjacent-rank hinge plus mean ranked-vs-negative hinge. With m
 * negatives per position, `neg` has k*m entries and entry n pairs with
 * ranked position n / m. Kinks take subgradient 0.
 */
inline PairwiseResult pairwise_loss(std::span<const double> s, std::span<const double> neg, double delta1,
                                    double delta2) {
  const std::size_t k = s.size();
  if (k == 0) throw Error("pairwise_loss: empty ranking");
  PairwiseResult r{0.0, std::vector<double>(k, 0.0), std::vector<double>(neg.size(), 0.0)};
  if (k > 1) {
    const double inv = 1.0 / static_cast<double>(k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) {
      const double m = s[j + 1] - s[j] + delta1;
      if (m > 0.0) {
        r.loss += inv * m;
        r.grad[j + 1] += inv;
        r.grad[j] -= inv;
      }
    }
  }
  if (!neg.empty()) {
    if (neg.size() % k != 0) throw Error("pairwise_loss: negatives must be a multiple of k");
    const std::size_t per = neg.size() / k;
    const double inv = 1.0 / static_cast<double>(neg.size());
    for (std::size_t n = 0; n < neg.size(); ++n) {
      const std::size_t j = n / per;
      const double m = neg[n] - s[j] + delta2;
      if (m > 0.0) {
        r.loss += inv * m;
        r.grad_neg[n] += inv;
        r.grad[j] -= inv;
      }
    }
  }
  return r;
}

struct DistillLossResult {
  double loss = 0.0;
  double kl = 0.0;
  double pairwise = 0.0;
  std::vector<double> grad;
  std::vector<double> grad_neg;
};

/// lambda * pairwise + (1 - lambda) * KL.
inline DistillLossResult distill_loss(const DistillConfig& cfg, std::span<const double> s,
                                      std::span<const double> neg, const CognitiveDistribution& pb) {
  const auto pw = surrogate_distribution(s, cfg.tau_w);
  const auto kl = kl_loss(pb, pw, cfg.tau_w);
  const auto pr = pairwise_loss(s, neg, cfg.delta1, cfg.delta2);
  DistillLossResult r;
  r.kl = kl.loss;
  r.pairwise = pr.loss;
  r.loss = cfg.lambda * pr.loss + (1.0 - cfg.lambda) * kl.loss;
  r.grad.resize(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) r.grad[j] = cfg.lambda * pr.grad[j] + (1.0 - cfg.lambda) * kl.grad[j];
  r.grad_neg = pr.grad_neg;
  for (auto& g : r.grad_neg) g *= cfg.lambda;
  return r;
}

/**
 * Distillation loss of one (prefix, ranking) pair through the surrogate,
 * accumulating parameter gradients into `grads`. Every ranked item is scored
 * against the full prefix context.
 */
inline double distill_example(const RecommenderParams& p, std::span<const ItemId> prefix,
                              std::span<const ItemId> ranked, std::span<const ItemId> negatives,
                              const DistillConfig& cfg, const CognitiveDistribution& pb, ParamGrads& grads) {
  const auto h = encode_ids(p, prefix);
  std::vector<double> s(ranked.size()), sn(negatives.size());
  for (std::size_t j = 0; j < ranked.size(); ++j) s[j] = detail::dot(h, p.row(ranked[j])) + p.b[ranked[j]];
  for (std::size_t j = 0; j < negatives.size(); ++j)
    sn[j] = detail::dot(h, p.row(negatives[j])) + p.b[negatives[j]];
  const auto r = distill_loss(cfg, s, sn, pb);

  std::vector<ItemId> items(ranked.begin(), ranked.end());
  items.insert(items.end(), negatives.begin(), negatives.end());
  std::vector<double> g = r.grad;
  g.insert(g.end(), r.grad_neg.begin(), r.grad_neg.end());
  backprop_scores(p, prefix, h, items, g, grads);
  return r.loss;
}

/// Uniform negatives from the vocabulary minus the ranked list (rejection sampling).
class NegativeSampler {
 public:
  explicit NegativeSampler(std::size_t num_items) : mark_(num_items, 0) {}

  std::vector<ItemId> sample(std::span<const ItemId> ranked, std::size_t count, Rng& rng) {
    std::vector<ItemId> out;
    std::size_t distinct = 0;
    for (ItemId id : ranked) {
      if (!mark_[id]) ++distinct;
      mark_[id] = 1;
    }
    // No candidates left when the ranking covers the whole vocabulary.
    if (distinct < mark_.size()) {
      std::uniform_int_distribution<ItemId> u(0, static_cast<ItemId>(mark_.size() - 1));
      out.reserve(count);
      while (out.size() < count) {
        const ItemId c = u(rng);
        if (!mark_[c]) out.push_back(c);
      }
    }
    for (ItemId id : ranked) mark_[id] = 0;
    return out;
  }

 private:
  std::vector<unsigned char> mark_;
};

/// Trains `p` in place on the query set; epochs = 0 leaves it untouched.
inline RecommenderParams distill_train(RecommenderParams p, const QuerySet& data, const DistillConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error("distill_train: empty query set");
  const auto& tc = cfg.train;
  if (tc.epochs == 0) return p;

  std::map<std::size_t, CognitiveDistribution> targets;
  for (const auto& r : data.records) {
    check_ids(p, r.prefix);
    check_ids(p, r.ranking.items);
    if (!targets.count(r.ranking.size()))
      targets.emplace(r.ranking.size(), cognitive_distribution(r.ranking.size(), cfg.alpha, cfg.tau_b));
  }

  Rng rng(cfg.seed);
  AdamW opt(p, tc);
  ParamGrads grads(p);
  NegativeSampler sampler(p.num_items);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      grads.zero();
      for (std::size_t n = start; n < end; ++n) {
        const auto& rec = data.records[order[n]];
        const auto& ranked = rec.ranking.items;
        const auto negs = sampler.sample(ranked, ranked.size() * cfg.negatives_per_position, rng);
        const double loss = distill_example(p, clip_context(rec.prefix, tc.max_context), ranked, negs, cfg,
                                            targets.at(ranked.size()), grads);
        if (!std::isfinite(loss))
          throw NumericError("non-finite distillation loss at epoch " + std::to_string(epoch) + ", record " +
                             std::to_string(order[n]));
      }
      opt.step(p, grads, 1.0 / static_cast<double>(end - start));
    }
  }
  return p;
}

/// Fresh surrogate (seeded from cfg.seed) trained on the query set.
inline RecommenderParams distill_train(const QuerySet& data, std::size_t num_items, const DistillConfig& cfg) {
  return distill_train(init_params(num_items, cfg.dim, cfg.gamma, cfg.seed), data, cfg);
}

}  // namespace recattack
