// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthetic.hpp
 * @brief  Planted-group synthetic interaction corpus.
 *
 * Items are split into G latent groups (random assignment). Each next item
 * stays in the current group with probability p_stay and otherwise moves to
 * a uniformly chosen other group; inside a group items are drawn by a Zipf
 * popularity over a random within-group order. Lengths are min_length plus
 * a geometric draw, rejected above max_length.
 */
#pragma once

#include <vector>

#include "recattack/corpus.hpp"

namespace recattack {

struct SyntheticSpec {
  std::size_t items = 200;
  std::size_t users = 500;
  std::size_t groups = 10;
  double p_stay = 0.8;
  std::size_t min_length = 8;
  std::size_t max_length = 60;
  double mean_length = 25.0;
  double zipf_exponent = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (items < 10) throw ConfigError("synthetic corpus needs at least 10 items");
    if (users < 10) throw ConfigError("synthetic corpus needs at least 10 users");
    if (groups < 1 || groups > items) throw ConfigError("group count must lie in [1, items]");
    if (!(p_stay >= 0.0 && p_stay <= 1.0)) throw ConfigError("p_stay must lie in [0, 1]");
    if (min_length < kMinSequenceLength) throw ConfigError("min_length must be >= 3");
    if (min_length > max_length) throw ConfigError("min_length exceeds max_length");
    if (!(mean_length >= static_cast<double>(min_length)))
      throw ConfigError("mean_length must be >= min_length");
    if (!(zipf_exponent >= 0.0)) throw ConfigError("zipf exponent must be >= 0");
  }
};

struct SyntheticCorpus {
  InteractionCorpus corpus;
  std::vector<std::size_t> group_of;  // latent group per item
};

inline SyntheticCorpus gen_synthetic_corpus_with_groups(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<ItemId> perm(spec.items);
  std::iota(perm.begin(), perm.end(), ItemId{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<ItemId>> members(spec.groups);
  std::vector<std::size_t> group_of(spec.items);
  for (std::size_t n = 0; n < spec.items; ++n) {
    const std::size_t g = n * spec.groups / spec.items;
    members[g].push_back(perm[n]);
    group_of[perm[n]] = g;
  }
  std::vector<std::discrete_distribution<std::size_t>> within;
  for (const auto& m : members) {
    std::vector<double> w(m.size());
    for (std::size_t r = 0; r < m.size(); ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
    within.emplace_back(w.begin(), w.end());
  }

  std::uniform_int_distribution<std::size_t> any_group(0, spec.groups - 1);
  std::uniform_int_distribution<std::size_t> other_group(0, spec.groups > 1 ? spec.groups - 2 : 0);
  std::bernoulli_distribution stay(spec.p_stay);
  std::geometric_distribution<std::size_t> extra(1.0 / (spec.mean_length - static_cast<double>(spec.min_length) + 1.0));

  std::vector<Sequence> seqs;
  seqs.reserve(spec.users);
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::size_t len;
    do {
      len = spec.min_length + extra(rng);
    } while (len > spec.max_length);
    Sequence x;
    x.reserve(len);
    std::size_t g = any_group(rng);
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0 && spec.groups > 1 && !stay(rng)) {
        std::size_t h = other_group(rng);
        g = h >= g ? h + 1 : h;
      }
      x.push_back(members[g][within[g](rng)]);
    }
    seqs.push_back(std::move(x));
  }
  return {make_corpus(std::move(seqs), spec.items), std::move(group_of)};
}

inline InteractionCorpus gen_synthetic_corpus(const SyntheticSpec& spec) {
  return gen_synthetic_corpus_with_groups(spec).corpus;
}

}  // namespace recattack
