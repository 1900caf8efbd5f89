// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "oracles.hpp"
#include "recattack/distill.hpp"
#include "recattack/evalkit.hpp"
#include "recattack/synthgen.hpp"

namespace recattack {
namespace {

TEST(CognitivePriorTest, Values) {
  EXPECT_EQ(cognitive_prior(3, 0.5), (std::vector<double>{1.0, 0.5, 0.25}));
  EXPECT_EQ(cognitive_prior(4, 1.0), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(cognitive_prior(1, 0.3), (std::vector<double>{1.0}));
  EXPECT_THROW(cognitive_prior(0, 0.5), ConfigError);
}

TEST(CognitiveDistributionTest, Values) {
  EXPECT_EQ(cognitive_distribution(1, 0.9, 0.5).probs, (std::vector<double>{1.0}));
  for (double tau : {0.1, 1.0, 7.0})
    for (double p : cognitive_distribution(5, 1.0, tau).probs) EXPECT_NEAR(p, 0.2, 1e-15);
  const auto d = cognitive_distribution(3, 0.5, 1.0).probs;
  EXPECT_NEAR(d[0], 0.4810, 5e-5);
  EXPECT_NEAR(d[1], 0.2918, 5e-5);
  EXPECT_NEAR(d[2], 0.2272, 5e-5);
  const auto ref = testing::naive_softmax({1.0, 0.5, 0.25}, 1.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(d[j], ref[j], 1e-15);
}

TEST(CognitiveDistributionTest, NormalisedAndMonotoneAcrossParameters) {
  for (std::size_t k : {1u, 2u, 10u, 100u})
    for (double alpha : {0.1, 0.7, 0.97, 0.999})
      for (double tau : {0.05, 0.5, 2.0}) {
        const auto d = cognitive_distribution(k, alpha, tau).probs;
        EXPECT_NEAR(std::accumulate(d.begin(), d.end(), 0.0), 1.0, 1e-12);
        for (std::size_t j = 1; j < k; ++j) EXPECT_LE(d[j], d[j - 1]);  // deep tails can underflow to ties
        if (k > 1) {
          EXPECT_LT(d[1], d[0]);
        }
      }
}

TEST(CognitiveDistributionTest, InvalidParameters) {
  EXPECT_THROW(cognitive_distribution(3, 0.5, 0.0), ConfigError);
  EXPECT_THROW(cognitive_distribution(3, 0.0, 1.0), ConfigError);
  EXPECT_THROW(cognitive_distribution(3, 1.5, 1.0), ConfigError);
}

TEST(RankEquivalenceTest, Examples) {
  EXPECT_TRUE(rank_equivalence_check(10, 0.97));
  EXPECT_FALSE(rank_equivalence_check(10, 1.0));
  EXPECT_TRUE(rank_equivalence_check(1, 1.0));
}

TEST(RankEquivalenceTest, HoldsForEveryDecayBelowOne) {
  for (std::size_t k = 1; k <= 200; k += 7)
    for (double alpha = 0.05; alpha < 1.0; alpha += 0.05) EXPECT_TRUE(rank_equivalence_check(k, alpha));
}

TEST(SurrogateDistributionTest, Values) {
  for (double p : surrogate_distribution(std::vector<double>{3, 3, 3, 3}, 1.0).probs) EXPECT_DOUBLE_EQ(p, 0.25);
  const auto d = surrogate_distribution(std::vector<double>{2, 0}, 1.0).probs;
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(d[0], e2 / (e2 + 1), 1e-15);
  EXPECT_NEAR(d[0], 0.8808, 5e-5);
  EXPECT_NEAR(d[1], 0.1192, 5e-5);
}

TEST(SurrogateDistributionTest, HighTemperatureApproachesUniform) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < 100; ++n) {
    std::vector<double> s(2 + rng() % 20);
    for (auto& v : s) v = u(rng);
    for (double p : surrogate_distribution(s, 1e3).probs) EXPECT_LT(std::abs(p - 1.0 / s.size()), 1e-3);
  }
}

// ============================================================================
// Losses
// ============================================================================

TEST(KlLossTest, Values) {
  CognitiveDistribution a{{0.3, 0.7}};
  EXPECT_EQ(kl_loss(a, a, 1.0).loss, 0.0);
  EXPECT_NEAR(kl_loss({{1 - 1e-12, 1e-12}}, {{0.5, 0.5}}, 1.0).loss, std::log(2.0), 1e-9);
  const double v = kl_loss({{0.5, 0.5}}, {{0.75, 0.25}}, 1.0).loss;
  EXPECT_NEAR(v, 0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0), 1e-15);
  EXPECT_NEAR(v, 0.1438, 5e-5);
}

TEST(KlLossTest, NonNegativeOnRandomPairs) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(1 + rng() % 12), b(a.size());
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    EXPECT_GE(kl_loss({detail::softmax(a)}, {detail::softmax(b)}, 1.0).loss, -1e-15);
  }
}

TEST(PairwiseLossTest, Values) {
  EXPECT_EQ(pairwise_loss(std::vector<double>{3, 2, 1}, std::vector<double>{0, 0, 0}, 0.5, 0.5).loss, 0.0);
  EXPECT_DOUBLE_EQ(pairwise_loss(std::vector<double>{1, 1}, std::vector<double>{0, 0}, 0.5, 0.5).loss, 0.5);
  EXPECT_DOUBLE_EQ(pairwise_loss(std::vector<double>{0, 1}, std::vector<double>{0, 0}, 0.5, 0.5).loss, 1.75);
  EXPECT_THROW(pairwise_loss(std::vector<double>{0, 1}, std::vector<double>{0, 0, 0}, 0.5, 0.5), Error);
}

TEST(DistillLossTest, Combination) {
  DistillConfig cfg;
  cfg.tau_w = 1.0;
  const std::vector<double> s{0.4, -0.2, 0.9}, neg{0.1, 0.0, -0.3};
  const auto pb = cognitive_distribution(3, 0.8, 0.5);
  const double pair = pairwise_loss(s, neg, cfg.delta1, cfg.delta2).loss;
  const double kl = kl_loss(pb, surrogate_distribution(s, 1.0), 1.0).loss;
  cfg.lambda = 1.0;
  EXPECT_DOUBLE_EQ(distill_loss(cfg, s, neg, pb).loss, pair);
  cfg.lambda = 0.0;
  EXPECT_DOUBLE_EQ(distill_loss(cfg, s, neg, pb).loss, kl);
  cfg.lambda = 0.5;
  EXPECT_NEAR(0.5 * 0.5 + 0.5 * 0.1438, 0.3219, 5e-5);
  EXPECT_DOUBLE_EQ(distill_loss(cfg, s, neg, pb).loss, 0.5 * pair + 0.5 * kl);
}

// Score-level gradients of every loss term versus central differences.
TEST(DistillLossTest, ScoreGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    DistillConfig cfg;
    cfg.lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    cfg.tau_w = std::uniform_real_distribution<double>(0.3, 3.0)(rng);
    const std::size_t k = 1 + rng() % 10, m = 1 + rng() % 3;
    std::vector<double> s(k), neg(k * m);
    for (auto& v : s) v = n(rng);
    for (auto& v : neg) v = n(rng);
    const auto pb = cognitive_distribution(k, 0.9, 0.5);
    const auto r = distill_loss(cfg, s, neg, pb);
    auto f = [&] { return distill_loss(cfg, s, neg, pb).loss; };
    for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, testing::rel_error(r.grad[j], testing::central_difference(f, s[j])));
    for (std::size_t j = 0; j < neg.size(); ++j)
      worst = std::max(worst, testing::rel_error(r.grad_neg[j], testing::central_difference(f, neg[j])));
  }
  // hinge kinks are hit with probability ~0 for continuous draws
  EXPECT_LE(worst, 1e-4);
}

// Parameter gradients through the surrogate versus central differences.
TEST(DistillLossTest, ParameterGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    auto p = testing::random_params(25, 6, rng, 0.5);
    DistillConfig cfg;
    cfg.lambda = 0.3;
    const auto prefix = testing::random_sequence(25, 1 + rng() % 6, rng);
    Sequence ranked(25);
    std::iota(ranked.begin(), ranked.end(), ItemId{0});
    std::shuffle(ranked.begin(), ranked.end(), rng);
    const Sequence negs(ranked.begin() + 5, ranked.begin() + 10);
    ranked.resize(5);
    const auto pb = cognitive_distribution(5, 0.9, 0.5);
    ParamGrads g(p);
    distill_example(p, prefix, ranked, negs, cfg, pb, g);
    auto f = [&] {
      ParamGrads scratch(p);
      return distill_example(p, prefix, ranked, negs, cfg, pb, scratch);
    };
    for (std::size_t i = 0; i < 25; ++i) {
      for (std::size_t k = 0; k < p.dim; ++k)
        worst = std::max(worst, testing::rel_error(g.dE[i * p.dim + k], testing::central_difference(f, p.E[i * p.dim + k])));
      worst = std::max(worst, testing::rel_error(g.db[i], testing::central_difference(f, p.b[i])));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(NegativeSamplerTest, ExcludesRankedItems) {
  NegativeSampler ns(10);
  Rng rng(1);
  const Sequence ranked{0, 2, 4, 6, 8};
  for (int t = 0; t < 100; ++t)
    for (ItemId id : ns.sample(ranked, 5, rng)) EXPECT_EQ(id % 2, 1u);
  Sequence all(10);
  std::iota(all.begin(), all.end(), ItemId{0});
  EXPECT_TRUE(ns.sample(all, 3, rng).empty());
}

// ============================================================================
// Training
// ============================================================================

struct Fixture {
  RecommenderParams victim;
  QuerySet data;
  DistillConfig cfg;
};

Fixture make_fixture() {
  std::mt19937_64 rng(5);
  Fixture fx{testing::random_params(40, 6, rng), {}, {}};
  BlackBox bb(fx.victim, 10, 100000);
  fx.data = generate_sequences(bb, SamplerPolicy::position_decay(0.9), 150, 10, 3);
  fx.cfg.dim = 8;
  fx.cfg.train.learning_rate = 0.02;
  fx.cfg.train.epochs = 8;
  fx.cfg.train.batch_size = 32;
  return fx;
}

TEST(DistillTrainTest, ZeroEpochsIsIdentity) {
  auto fx = make_fixture();
  fx.cfg.train.epochs = 0;
  EXPECT_EQ(distill_train(fx.data, 40, fx.cfg), init_params(40, fx.cfg.dim, fx.cfg.gamma, fx.cfg.seed));
}

TEST(DistillTrainTest, Deterministic) {
  const auto fx = make_fixture();
  EXPECT_EQ(distill_train(fx.data, 40, fx.cfg), distill_train(fx.data, 40, fx.cfg));
}

TEST(DistillTrainTest, ImprovesAgreementWithVictim) {
  const auto fx = make_fixture();
  std::vector<Sequence> contexts;
  std::mt19937_64 rng(9);
  for (int n = 0; n < 200; ++n) contexts.push_back(testing::random_sequence(40, 2 + rng() % 8, rng));
  const auto before = evaluate_agreement(fx.victim, init_params(40, fx.cfg.dim, fx.cfg.gamma, fx.cfg.seed), contexts, 10);
  const auto after = evaluate_agreement(fx.victim, distill_train(fx.data, 40, fx.cfg), contexts, 10);
  EXPECT_GT(after.atk, before.atk);
}

TEST(DistillTrainTest, Errors) {
  auto fx = make_fixture();
  EXPECT_THROW(distill_train(QuerySet{}, 40, fx.cfg), Error);
  EXPECT_THROW(distill_train(fx.data, 10, fx.cfg), Error);  // ids out of range
  fx.cfg.lambda = 1.5;
  EXPECT_THROW(distill_train(fx.data, 40, fx.cfg), ConfigError);
}

}  // namespace
}  // namespace recattack
