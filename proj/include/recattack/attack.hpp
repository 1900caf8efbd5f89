// SPDX-License-Identifier: Apache-2.0
/**
 * @file   attack.hpp
 * @brief  Behaviour-consistent profile pollution: gradient alignment and
 *         collaborative scores fused per candidate, greedy instantiation on
 *         the surrogate, and black-box validation. Also holds the
 *         RandAlter / SimAlter baselines.
 */
#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recattack/corpus.hpp"
#include "recattack/oracle.hpp"
#include "recattack/recmodel.hpp"

namespace recattack {

enum class GradientMode {
  placeholder,  // gradient of the appended placeholder row only
  averaged      // mean over all rows of the embedded sequence
};

struct AttackConfig {
  ItemId target = 0;
  std::size_t length = 0;  // polluted length T
  double epsilon = 0.1;
  std::size_t candidates = 5;  // n
  std::size_t neighbors = 20;  // K
  double w_grad = 0.5;         // w_g; w_s = 1 - w_g
  CorelKind kind = CorelKind::jaccard;
  GradientMode gradient_mode = GradientMode::placeholder;
  bool refine = true;
  double refine_step = 0.2;
  std::uint64_t seed = 11;

  double w_collab() const { return 1.0 - w_grad; }

  void validate() const {
    if (!(w_grad >= 0.0 && w_grad <= 1.0)) throw ConfigError("w_g must lie in [0, 1]");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (candidates < 1) throw ConfigError("candidates per step must be >= 1");
    if (neighbors < 1) throw ConfigError("neighbour size must be >= 1");
  }
};

struct ExposureResult {
  bool in_top_k = false;
  std::optional<std::size_t> rank;  // 1-based, present only within the top k
  double reciprocal_rank = 0.0;

  bool operator==(const ExposureResult&) const = default;
};

inline ExposureResult exposure_of(const RankedList& list, ItemId t, std::size_t k) {
  const std::size_t limit = std::min(k, list.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (list.items[i] == t) return {true, i + 1, 1.0 / static_cast<double>(i + 1)};
  return {};
}

/**
 * Cosine between every item embedding and the placeholder embedding moved
 * one signed step against the cross-entropy gradient of predicting t.
 */
inline std::vector<double> grad_alignment(const RecommenderParams& p, std::span<const ItemId> z, ItemId t,
                                          double epsilon, GradientMode mode = GradientMode::placeholder) {
  if (z.empty() || z.back() != t) throw Error("grad_alignment: sequence must end with the target placeholder");
  const auto h = encode_ids(p, z);
  auto g = detail::softmax(score_all(p, h));
  g[t] -= 1.0;
  std::vector<double> dh(p.dim, 0.0);
  for (std::size_t i = 0; i < p.num_items; ++i) {
    auto e = p.row(static_cast<ItemId>(i));
    for (std::size_t k = 0; k < p.dim; ++k) dh[k] += g[i] * e[k];
  }
  // Every row's gradient is w_t * dh with w_t > 0, so the sign pattern is
  // shared by the placeholder row and the row average.
  std::vector<double> base(p.dim);
  if (mode == GradientMode::placeholder) {
    auto et = p.row(t);
    base.assign(et.begin(), et.end());
  } else {
    for (ItemId id : z) {
      auto e = p.row(id);
      for (std::size_t k = 0; k < p.dim; ++k) base[k] += e[k] / static_cast<double>(z.size());
    }
  }
  for (std::size_t k = 0; k < p.dim; ++k) base[k] -= epsilon * detail::sign(dh[k]);

  std::vector<double> sim(p.num_items);
  for (std::size_t j = 0; j < p.num_items; ++j) sim[j] = detail::cosine(base, p.row(static_cast<ItemId>(j)));
  return sim;
}

/// corel(j, t) min-max normalised over the pool (constant raw scores map to 0.5).
inline std::vector<double> collab_signal(const CoMatrix& m, ItemId t, std::span<const ItemId> pool,
                                         CorelKind kind) {
  if (pool.empty()) throw Error("collab_signal: empty pool");
  std::vector<double> raw(pool.size());
  for (std::size_t n = 0; n < pool.size(); ++n) raw[n] = corel(m, pool[n], t, kind);
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo, span = *hi - *lo;
  for (auto& v : raw) v = span > 0.0 ? (v - min) / span : 0.5;
  return raw;
}

inline double fuse(double sim_g, double s_collab, double w_g, double w_s) { return w_g * sim_g + w_s * s_collab; }

/// Collaborative neighbours of t united with the K most gradient-aligned
/// items, t removed, in ascending id order.
inline Sequence cohort_filter(const CoMatrix& m, ItemId t, std::span<const double> sim_g, std::size_t k,
                              CorelKind kind = CorelKind::jaccard) {
  std::set<ItemId> h;
  for (ItemId id : topk_neighbors(m, t, k, kind)) h.insert(id);
  for (ItemId id : detail::top_k_indices(sim_g, k)) h.insert(id);
  h.erase(t);
  return {h.begin(), h.end()};
}

struct PolluteResult {
  Sequence z;
  /// Some step found an empty cohort and fell back to gradient-only candidates.
  bool fallback_used = false;
};

inline PolluteResult pollute(const RecommenderParams& surrogate, const CoMatrix& m, std::span<const ItemId> x,
                             const AttackConfig& cfg) {
  cfg.validate();
  const ItemId t = cfg.target;
  if (t >= surrogate.num_items) throw Error("attack target out of range");
  PolluteResult out{Sequence(x.begin(), x.end()), false};
  Sequence& z = out.z;

  while (z.size() < cfg.length) {
    z.push_back(t);
    const auto sim = grad_alignment(surrogate, z, t, cfg.epsilon, cfg.gradient_mode);
    auto pool = cohort_filter(m, t, sim, cfg.neighbors, cfg.kind);
    const bool fallback = pool.empty();
    if (fallback) {
      out.fallback_used = true;
      for (std::size_t j = 0; j < surrogate.num_items; ++j)
        if (j != t) pool.push_back(static_cast<ItemId>(j));
    }
    if (pool.empty()) throw Error("pollute: vocabulary has no item besides the target");
    const auto collab = collab_signal(m, t, pool, cfg.kind);

    std::vector<double> fused(pool.size());
    for (std::size_t n = 0; n < pool.size(); ++n)
      fused[n] = fallback ? sim[pool[n]] : fuse(sim[pool[n]], collab[n], cfg.w_grad, cfg.w_collab());
    // top_k_indices breaks ties by position, and pool is in ascending id order.
    const auto chosen = detail::top_k_indices(fused, cfg.candidates);

    std::size_t best = chosen.front();
    double best_prob = -1.0;
    for (auto n : chosen) {
      z.back() = pool[n];
      const double prob = target_probability(surrogate, z, t);
      const bool better = prob > best_prob ||
                          (prob == best_prob && (collab[n] > collab[best] ||
                                                 (collab[n] == collab[best] && pool[n] < pool[best])));
      if (better) {
        best = n;
        best_prob = prob;
      }
    }
    z.back() = pool[best];
  }
  return out;
}

/// Alternates a uniform non-target item with the target until length T.
inline Sequence baseline_rand_alter(std::span<const ItemId> x, ItemId t, std::size_t length,
                                    std::size_t num_items, std::uint64_t seed) {
  if (num_items < 2) throw ConfigError("RandAlter needs at least two items");
  Rng rng(seed);
  std::uniform_int_distribution<ItemId> u(0, static_cast<ItemId>(num_items - 2));
  Sequence z(x.begin(), x.end());
  bool filler = true;
  while (z.size() < length) {
    if (filler) {
      ItemId r = u(rng);
      if (r >= t) ++r;
      z.push_back(r);
    } else {
      z.push_back(t);
    }
    filler = !filler;
  }
  return z;
}

/// Alternates the nearest not-yet-inserted embedding neighbour of t with t.
inline Sequence baseline_sim_alter(const RecommenderParams& model, std::span<const ItemId> x, ItemId t,
                                   std::size_t length) {
  std::vector<double> sim(model.num_items);
  for (std::size_t j = 0; j < model.num_items; ++j)
    sim[j] = detail::cosine(model.row(t), model.row(static_cast<ItemId>(j)));
  sim[t] = -std::numeric_limits<double>::infinity();
  const auto order = detail::top_k_indices(sim, model.num_items - 1);
  Sequence z(x.begin(), x.end());
  std::size_t next = 0;
  bool filler = true;
  while (z.size() < length) {
    if (filler) {
      if (next >= order.size()) next = 0;
      z.push_back(order[next++]);
    } else {
      z.push_back(t);
    }
    filler = !filler;
  }
  return z;
}

/// One black-box query: is t within the first k positions of the response.
inline ExposureResult validate(BlackBox& bb, std::span<const ItemId> z, ItemId t, std::size_t k) {
  return exposure_of(bb.query(z), t, k);
}

struct AttackOutcome {
  Sequence z;
  ExposureResult exposure;
  bool validated = false;  // false when the budget ran out before validation
  bool refined = false;
  bool fallback_used = false;
};

/**
 * pollute + black-box validation. A failed validation triggers one re-run
 * with w_g raised by refine_step (clamped to 1); a second failure is kept.
 */
inline AttackOutcome attack_sequence(const RecommenderParams& surrogate, const CoMatrix& m, BlackBox& bb,
                                     std::span<const ItemId> x, const AttackConfig& cfg, std::size_t k) {
  auto first = pollute(surrogate, m, x, cfg);
  AttackOutcome out{std::move(first.z), {}, false, false, first.fallback_used};
  try {
    out.exposure = validate(bb, out.z, cfg.target, k);
    out.validated = true;
    if (!out.exposure.in_top_k && cfg.refine) {
      AttackConfig again = cfg;
      again.w_grad = std::min(1.0, cfg.w_grad + cfg.refine_step);
      auto second = pollute(surrogate, m, x, again);
      out.z = std::move(second.z);
      out.fallback_used = out.fallback_used || second.fallback_used;
      out.refined = true;
      out.exposure = validate(bb, out.z, cfg.target, k);
    }
  } catch (const BudgetExhausted&) {
    out.validated = false;
    out.exposure = {};
  }
  return out;
}

}  // namespace recattack
