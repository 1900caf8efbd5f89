// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "recattack/recmodel.hpp"

namespace recattack {
namespace {

RecommenderParams toy_params() {
  // V = 3, d = 2, E = rows (1,0), (0,1), (1,1), zero biases
  RecommenderParams p;
  p.num_items = 3;
  p.dim = 2;
  p.gamma = 0.5;
  p.E = {1, 0, 0, 1, 1, 1};
  p.b = {0, 0, 0};
  return p;
}

TEST(EmbedTest, LooksUpRows) {
  const auto z = embed(toy_params(), Sequence{2, 0});
  EXPECT_EQ(z.length, 2u);
  EXPECT_EQ(z.rows, (std::vector<double>{1, 1, 1, 0}));
}

TEST(EmbedTest, RejectsOutOfRangeAndEmpty) {
  EXPECT_THROW(embed(toy_params(), Sequence{0, 3}), Error);
  EXPECT_THROW(embed(toy_params(), Sequence{}), Error);
}

TEST(EncodeTest, RecencyWeightedMean) {
  // weights for T = 2, gamma = 0.5: (1/3, 2/3)
  const auto h = encode_ids(toy_params(), Sequence{0, 1});
  EXPECT_NEAR(h[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(h[1], 2.0 / 3.0, 1e-15);
  const auto p = toy_params();
  EXPECT_EQ(encode(p, embed(p, Sequence{0, 1})), h);
}

TEST(EncodeTest, WeightsSumToOneAndIncrease) {
  for (double g : {0.1, 0.5, 0.8, 1.0})
    for (std::size_t T : {1u, 2u, 7u, 50u}) {
      const auto w = encoder_weights(T, g);
      EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
      for (std::size_t t = 1; t < T; ++t) EXPECT_GE(w[t], w[t - 1]);
    }
}

TEST(EncodeTest, HiddenStateInsideBoundingBoxOfRows) {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 100; ++n) {
    const auto p = testing::random_params(15, 4, rng);
    const auto x = testing::random_sequence(15, 1 + rng() % 10, rng);
    const auto h = encode_ids(p, x);
    for (std::size_t k = 0; k < 4; ++k) {
      double lo = 1e300, hi = -1e300;
      for (ItemId i : x) {
        lo = std::min(lo, p.E[i * 4 + k]);
        hi = std::max(hi, p.E[i * 4 + k]);
      }
      EXPECT_GE(h[k], lo - 1e-12);
      EXPECT_LE(h[k], hi + 1e-12);
    }
  }
}

TEST(GradientTest, LossFiniteForLargeScores) {
  RecommenderParams p = init_params(6, 1, 0.8, 1);
  std::fill(p.E.begin(), p.E.end(), 0.0);
  p.b = {1e3, -1e3, 500, 0, -500, 1e3};
  for (ItemId t = 0; t < 6; ++t) EXPECT_TRUE(std::isfinite(ce_loss_and_grads(p, Sequence{0}, t).loss));
}

TEST(ScoreTest, MatchesDirectFormula) {
  const auto s = score_sequence(toy_params(), Sequence{0, 1});
  EXPECT_NEAR(s[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s[2], 1.0, 1e-15);
}

TEST(ScoreTest, MatchesNaiveOnRandomInstances) {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 100; ++n) {
    const auto p = testing::random_params(20, 4, rng);
    const auto x = testing::random_sequence(20, 1 + rng() % 10, rng);
    const auto a = score_sequence(p, x);
    const auto b = testing::naive_scores(p, x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    const ItemId t = static_cast<ItemId>(rng() % 20);
    EXPECT_NEAR(target_probability(p, x, t), testing::naive_target_probability(p, x, t), 1e-12);
  }
}

TEST(RecommendTest, OrderedByScoreWithIdTieBreak) {
  const auto p = toy_params();
  EXPECT_EQ(recommend_topk(p, Sequence{0, 1}, 3).items, (std::vector<ItemId>{2, 1, 0}));
  // equal scores for 0 and 1 when the context is item 2
  EXPECT_EQ(recommend_topk(p, Sequence{2}, 3).items, (std::vector<ItemId>{2, 0, 1}));
  EXPECT_EQ(recommend_topk(p, Sequence{0, 1}, 2, true).items.size(), 2u);
  EXPECT_EQ(recommend_topk(p, Sequence{0, 1}, 2, true).items.front(), 2u);
  EXPECT_THROW(recommend_topk(p, Sequence{0}, 0), ConfigError);
  EXPECT_THROW(recommend_topk(p, Sequence{0}, 4), ConfigError);
}

TEST(RecommendTest, BiasShiftLeavesRankingUnchanged) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 50; ++n) {
    auto p = testing::random_params(30, 5, rng);
    const auto x = testing::random_sequence(30, 6, rng);
    const auto before = recommend_topk(p, x, 10);
    for (auto& v : p.b) v += 3.25;
    EXPECT_EQ(recommend_topk(p, x, 10), before);
  }
}

// Analytic gradients of the cross-entropy versus central differences over
// random instances (V = 50, d = 8).
TEST(GradientTest, CrossEntropyMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    auto p = testing::random_params(50, 8, rng, 0.5);
    const auto x = testing::random_sequence(50, 1 + rng() % 8, rng);
    const ItemId target = static_cast<ItemId>(rng() % 50);
    const auto r = ce_loss_and_grads(p, x, target);
    auto f = [&] { return ce_loss_and_grads(p, x, target).loss; };

    // every embedding entry touched by the context plus a few random rows
    std::vector<std::size_t> rows(x.begin(), x.end());
    rows.push_back(target);
    rows.push_back(rng() % 50);
    for (std::size_t i : rows)
      for (std::size_t k = 0; k < p.dim; ++k) {
        const double num = testing::central_difference(f, p.E[i * p.dim + k]);
        worst = std::max(worst, testing::rel_error(r.grads.dE[i * p.dim + k], num));
      }
    for (std::size_t i = 0; i < 50; i += 7) {
      const double num = testing::central_difference(f, p.b[i]);
      worst = std::max(worst, testing::rel_error(r.grads.db[i], num));
    }

    // gradient with respect to the last embedded row only
    auto z = embed(p, x);
    auto fz = [&] { return ce_loss_embedded(p, z, target); };
    for (std::size_t k = 0; k < p.dim; ++k) {
      const double num = testing::central_difference(fz, z.row(z.length - 1)[k]);
      worst = std::max(worst, testing::rel_error(r.gpos[k], num));
    }
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(GradientTest, CrossEntropyLossValue) {
  const auto p = toy_params();
  const Sequence x{0, 1};
  const auto s = testing::naive_scores(p, x);
  const double expected = -std::log(testing::naive_softmax(s, 1.0)[2]);
  EXPECT_NEAR(ce_loss_and_grads(p, x, 2).loss, expected, 1e-14);
}

TEST(ModelExamplesTest, EncoderDegenerateCases) {
  auto p = toy_params();
  p.gamma = 1.0;
  const auto mean = encode_ids(p, Sequence{0, 1, 2});
  EXPECT_NEAR(mean[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(mean[1], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(encode_ids(p, Sequence{1}), (std::vector<double>{0, 1}));
  const auto z = embed(p, Sequence{2, 2});
  EXPECT_EQ(z.rows, (std::vector<double>{1, 1, 1, 1}));
  // gamma = 0.5, rows r1, r2 -> (0.5 r1 + r2) / 1.5
  p.gamma = 0.5;
  const auto h = encode_ids(p, Sequence{2, 0});
  EXPECT_NEAR(h[0], (0.5 + 1.0) / 1.5, 1e-15);
  EXPECT_NEAR(h[1], 0.5 / 1.5, 1e-15);
}

TEST(ModelExamplesTest, ScorerCases) {
  RecommenderParams p;
  p.num_items = 2;
  p.dim = 2;
  p.E = {0.9, 0.3, 0, 0};
  p.b = {0.1, 0};
  const std::vector<double> h{1, 0};
  EXPECT_NEAR(score_all(p, h)[0], 1.0, 1e-15);
  p.b = {0, 0};
  for (double v : score_all(p, std::vector<double>{0, 0})) EXPECT_EQ(v, 0.0);
}

TEST(ModelExamplesTest, CrossEntropyLimits) {
  RecommenderParams p = init_params(7, 3, 0.8, 1);
  std::fill(p.E.begin(), p.E.end(), 0.0);
  EXPECT_NEAR(ce_loss_and_grads(p, Sequence{1, 2}, 4).loss, std::log(7.0), 1e-14);
  // the loss is ln(1 + (V-1) e^-20), below 1e-8 only while V <= 5
  p = init_params(5, 3, 0.8, 1);
  std::fill(p.E.begin(), p.E.end(), 0.0);
  p.b[4] = 20.0;
  EXPECT_LT(ce_loss_and_grads(p, Sequence{1, 2}, 4).loss, 1e-8);
}

TEST(ModelExamplesTest, RankingCases) {
  RecommenderParams p = init_params(3, 1, 0.8, 1);
  std::fill(p.E.begin(), p.E.end(), 0.0);
  p.b = {0.5, 0.9, 0.1};
  EXPECT_EQ(recommend_topk(p, Sequence{0}, 2).items, (std::vector<ItemId>{1, 0}));
  auto all = recommend_topk(p, Sequence{0}, 3).items;
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, (std::vector<ItemId>{0, 1, 2}));
  EXPECT_EQ(recommend_topk(p, Sequence{0}, 2), recommend_topk(p, Sequence{0}, 2));
}

// ============================================================================
// Training
// ============================================================================

SplitDataset single_user(const Sequence& x, std::size_t V) { return leave_one_out_split(make_corpus({x}, V)); }

TEST(TrainTest, OverfitsTinyCorpus) {
  // train prefix [a, b]: after training, 'a' must rank 'b' first
  const auto data = single_user({0, 1, 2, 3}, 6);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.weight_decay = 0.0;
  const auto p = train(init_params(6, 8, 0.8, 5), data, cfg);
  EXPECT_EQ(recommend_topk(p, Sequence{0}, 1).items.front(), 1u);
}

TEST(TrainTest, ZeroEpochsReturnsInitialParams) {
  const auto init = init_params(6, 4, 0.8, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(train(init, single_user({0, 1, 2, 3}, 6), cfg), init);
}

TEST(TrainTest, DeterministicForFixedSeed) {
  std::mt19937_64 rng(4);
  const auto data = leave_one_out_split(testing::random_corpus(30, 20, 12, rng));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.01;
  const auto a = train(init_params(30, 6, 0.8, 1), data, cfg);
  const auto b = train(init_params(30, 6, 0.8, 1), data, cfg);
  EXPECT_EQ(params_fingerprint(a), params_fingerprint(b));
  cfg.seed = 2;
  EXPECT_NE(params_fingerprint(train(init_params(30, 6, 0.8, 1), data, cfg)), params_fingerprint(a));
}

TEST(TrainTest, ReducesTrainingLoss) {
  std::mt19937_64 rng(6);
  const auto data = leave_one_out_split(testing::random_corpus(15, 30, 10, rng));
  auto mean_loss = [&](const RecommenderParams& p) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : data.train)
      for (std::size_t t = 1; t < s.size(); ++t, ++n)
        sum += ce_loss_and_grads(p, std::span<const ItemId>(s).first(t), s[t]).loss;
    return sum / static_cast<double>(n);
  };
  const auto init = init_params(15, 6, 0.8, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  EXPECT_LT(mean_loss(train(init, data, cfg)), mean_loss(init));
}

TEST(TrainTest, NonFiniteLossRaises) {
  auto p = init_params(6, 4, 0.8, 1);
  p.E[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(p, single_user({0, 1, 2, 3}, 6), cfg), NumericError);
}

TEST(TrainTest, InvalidConfig) {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ============================================================================
// Serialization
// ============================================================================

TEST(ParamsIoTest, RoundTripIsExact) {
  std::mt19937_64 rng(8);
  const auto p = testing::random_params(17, 5, rng);
  std::stringstream ss;
  write_params(p, ss);
  const auto q = read_params(ss);
  EXPECT_EQ(p, q);
  EXPECT_EQ(params_fingerprint(p), params_fingerprint(q));
}

TEST(ParamsIoTest, RejectsGarbage) {
  std::stringstream ss("not a model\n");
  EXPECT_THROW(read_params(ss), Error);
  std::stringstream truncated;
  write_params(init_params(4, 2, 0.8, 1), truncated);
  std::string text = truncated.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_params(cut), Error);
}

}  // namespace
}  // namespace recattack
