// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evalkit.hpp
 * @brief  Leave-one-out ranking metrics, black-box/surrogate agreement,
 *         target exposure and the co-occurrence plausibility proxy.
 */
#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "recattack/attack.hpp"
#include "recattack/corpus.hpp"
#include "recattack/oracle.hpp"
#include "recattack/recmodel.hpp"

namespace recattack {

namespace detail {
inline void check_k(const RankedList& ranked, std::size_t k) {
  if (k < 1 || k > ranked.size()) throw ConfigError("metric cut-off k must satisfy 1 <= k <= list length");
}
}  // namespace detail

inline double recall_at_k(const RankedList& ranked, ItemId truth, std::size_t k) {
  detail::check_k(ranked, k);
  return std::find(ranked.items.begin(), ranked.items.begin() + static_cast<std::ptrdiff_t>(k), truth) !=
                 ranked.items.begin() + static_cast<std::ptrdiff_t>(k)
             ? 1.0
             : 0.0;
}

/// Single relevant item, so the ideal DCG is 1.
inline double ndcg_at_k(const RankedList& ranked, ItemId truth, std::size_t k) {
  detail::check_k(ranked, k);
  for (std::size_t i = 0; i < k; ++i)
    if (ranked.items[i] == truth) return 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return 0.0;
}

/// |top-k(a) ∩ top-k(b)| / k.
inline double agreement_at_k(const RankedList& a, const RankedList& b, std::size_t k) {
  detail::check_k(a, k);
  detail::check_k(b, k);
  std::vector<ItemId> x(a.items.begin(), a.items.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<ItemId> y(b.items.begin(), b.items.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::vector<ItemId> common;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

struct RankingQuality {
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Mean recall@k / ndcg@k of the model over (prefix, target) pairs.
inline RankingQuality evaluate_ranking(const RecommenderParams& p, std::span<const PrefixTarget> pairs,
                                       std::size_t k) {
  if (pairs.empty()) throw Error("evaluate_ranking: no pairs");
  RankingQuality q;
  for (const auto& pt : pairs) {
    const auto list = recommend_topk(p, pt.prefix, k);
    q.recall += recall_at_k(list, pt.target, k);
    q.ndcg += ndcg_at_k(list, pt.target, k);
  }
  q.recall /= static_cast<double>(pairs.size());
  q.ndcg /= static_cast<double>(pairs.size());
  return q;
}

struct Agreement {
  double at1 = 0.0;
  double atk = 0.0;
};

/// Mean Agr@1 and Agr@k between two models over a set of contexts.
inline Agreement evaluate_agreement(const RecommenderParams& reference, const RecommenderParams& candidate,
                                    std::span<const Sequence> contexts, std::size_t k) {
  if (contexts.empty()) throw Error("evaluate_agreement: no contexts");
  Agreement a;
  for (const auto& x : contexts) {
    const auto lr = recommend_topk(reference, x, k);
    const auto lc = recommend_topk(candidate, x, k);
    a.at1 += agreement_at_k(lr, lc, 1);
    a.atk += agreement_at_k(lr, lc, k);
  }
  a.at1 /= static_cast<double>(contexts.size());
  a.atk /= static_cast<double>(contexts.size());
  return a;
}

struct TargetExposure {
  double hit_rate = 0.0;
  double mrr = 0.0;
};

inline TargetExposure aggregate_exposure(std::span<const ExposureResult> results) {
  if (results.empty()) throw Error("target_exposure: empty user set");
  TargetExposure e;
  for (const auto& r : results) {
    e.hit_rate += r.in_top_k ? 1.0 : 0.0;
    e.mrr += r.reciprocal_rank;
  }
  e.hit_rate /= static_cast<double>(results.size());
  e.mrr /= static_cast<double>(results.size());
  return e;
}

/// Exposure of t in the model's top-k over the given user sequences.
inline TargetExposure target_exposure(const RecommenderParams& p, std::span<const Sequence> users, ItemId t,
                                      std::size_t k) {
  std::vector<ExposureResult> r;
  r.reserve(users.size());
  for (const auto& x : users) r.push_back(exposure_of(recommend_topk(p, x, k), t, k));
  return aggregate_exposure(r);
}

/// Same, measured through the budgeted black box (budget errors propagate).
inline TargetExposure target_exposure(BlackBox& bb, std::span<const Sequence> users, ItemId t, std::size_t k) {
  if (k > bb.k()) throw ConfigError("exposure cut-off exceeds the black-box list length");
  std::vector<ExposureResult> r;
  r.reserve(users.size());
  for (const auto& x : users) r.push_back(validate(bb, x, t, k));
  return aggregate_exposure(r);
}

/// Mean collaborative relatedness of adjacent items.
inline double plausibility_score(std::span<const ItemId> z, const CoMatrix& m, CorelKind kind) {
  if (z.size() < 2) throw Error("plausibility_score needs at least two items");
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < z.size(); ++i) s += corel(m, z[i], z[i + 1], kind);
  return s / static_cast<double>(z.size() - 1);
}

}  // namespace recattack
