// SPDX-License-Identifier: Apache-2.0
/**
 * @file   synthgen.hpp
 * @brief  Autoregressive query synthesis against the black box.
 */
#pragma once

#include <string>
#include <vector>

#include "recattack/oracle.hpp"

namespace recattack {

/// How the next item is drawn from the positions of a returned top-k list.
struct SamplerPolicy {
  enum class Kind { position_decay, rank_temperature, uniform };
  Kind kind = Kind::position_decay;
  /// decay for position_decay (in (0,1)), temperature for rank_temperature (> 0)
  double param = 0.9;

  static SamplerPolicy position_decay(double alpha) { return {Kind::position_decay, alpha}; }
  static SamplerPolicy rank_temperature(double tau) { return {Kind::rank_temperature, tau}; }
  static SamplerPolicy uniform() { return {Kind::uniform, 0.0}; }

  void validate() const {
    if (kind == Kind::position_decay && !(param > 0.0 && param < 1.0))
      throw ConfigError("position_decay parameter must lie in (0, 1)");
    if (kind == Kind::rank_temperature && !(param > 0.0))
      throw ConfigError("rank_temperature parameter must be > 0");
  }

  /// Unnormalised weight of 1-based position j.
  double weight(std::size_t j) const {
    switch (kind) {
      case Kind::position_decay:
        return std::pow(param, static_cast<double>(j - 1));
      case Kind::rank_temperature:
        return std::exp(-static_cast<double>(j) / param);
      case Kind::uniform:
        break;
    }
    return 1.0;
  }

  /// Normalised probabilities over positions 1..k.
  std::vector<double> position_probs(std::size_t k) const {
    std::vector<double> w(k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (w[j] = weight(j + 1));
    for (auto& v : w) v /= z;
    return w;
  }
};

inline const char* to_string(SamplerPolicy::Kind k) {
  switch (k) {
    case SamplerPolicy::Kind::position_decay:
      return "position_decay";
    case SamplerPolicy::Kind::rank_temperature:
      return "rank_temperature";
    case SamplerPolicy::Kind::uniform:
      break;
  }
  return "uniform";
}

inline SamplerPolicy::Kind parse_sampler_kind(std::string_view s) {
  if (s == "position_decay") return SamplerPolicy::Kind::position_decay;
  if (s == "rank_temperature") return SamplerPolicy::Kind::rank_temperature;
  if (s == "uniform") return SamplerPolicy::Kind::uniform;
  throw ConfigError("unknown sampler '" + std::string(s) + "'");
}

/**
 * Grows `count` sequences from uniform seed items up to `maxlen`, querying
 * the black box on every prefix and sampling the next item from the
 * response. Every observed (prefix, ranking) pair is returned. When the
 * budget runs out the pairs collected so far come back with `truncated` set.
 */
inline QuerySet generate_sequences(BlackBox& bb, const SamplerPolicy& policy, std::size_t count,
                                   std::size_t maxlen, std::uint64_t seed) {
  if (maxlen < 2) throw ConfigError("maxlen must be >= 2");
  policy.validate();
  Rng rng(seed);
  std::uniform_int_distribution<ItemId> seed_item(0, static_cast<ItemId>(bb.num_items() - 1));
  const auto probs = policy.position_probs(bb.k());
  std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());

  QuerySet out;
  for (std::size_t n = 0; n < count; ++n) {
    Sequence x{seed_item(rng)};
    while (x.size() < maxlen) {
      RankedList response;
      try {
        response = bb.query(x);
      } catch (const BudgetExhausted&) {
        out.truncated = true;
        return out;
      }
      const std::size_t pos = pick(rng);
      out.records.push_back({x, response});
      x.push_back(response.items[std::min(pos, response.items.size() - 1)]);
    }
  }
  return out;
}

}  // namespace recattack
