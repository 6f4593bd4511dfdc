#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "plandyn/corpus.hpp"
#include "plandyn/policy.hpp"

using namespace plandyn;

namespace {

TabularPolicy random_tabular(int n, std::uint64_t seed) {
  TabularPolicy t(n);
  Rng rng(seed);
  for (double& x : t.data()) x = 4.0 * uniform01(rng) - 2.0;
  return t;
}

LinearPolicy random_linear(int n, std::uint64_t seed) {
  LinearPolicy l(n);
  Rng rng(seed);
  for (int a = 0; a < n; ++a)
    for (int k = 0; k <= n; ++k) {
      l.feed_forward(a, k) = uniform01(rng) - 0.5;
      l.value(a, k) = uniform01(rng) - 0.5;
    }
  return l;
}

}  // namespace

TEST(Softmax, MatchesOracleAndTemperature) {
  const std::vector<double> x{1.0, -2.0, 0.5, 3.0};
  const auto q = softmax(x);
  const auto expect = oracle::probs(x);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(q[k], expect[k], 1e-15);
  const auto hot = softmax(x, 0.5);
  const auto expect_hot = oracle::probs({2.0, -4.0, 1.0, 6.0});
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(hot[k], expect_hot[k], 1e-15);
  const auto lq = log_softmax(x);
  for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(lq[k], std::log(expect[k]), 1e-14);
}

TEST(Softmax, SurvivesMaskedLogits) {
  const auto q = softmax(std::vector<double>{kMaskedLogit, 0.0, kMaskedLogit});
  EXPECT_EQ(q[1], 1.0);
  EXPECT_EQ(q[0], 0.0);
}

TEST(Tabular, ContextsAreIndependent) {
  TabularPolicy t(3);
  t.at(1, 2, 3) = 5.0;
  EXPECT_EQ(t.at(1, 2, 3), 5.0);
  EXPECT_EQ(t.at(2, 1, 3), 0.0);
  EXPECT_EQ(t.logits(1, 2).size(), 4u);
}

TEST(Linear, LogitIsFeedForwardPlusValue) {
  const LinearPolicy l = random_linear(5, 3);
  const Model m = l;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const auto f = logits_at(m, i, j);
      for (int k = 0; k <= 5; ++k) EXPECT_DOUBLE_EQ(f[k], l.feed_forward(j, k) + l.value(i, k));
    }
  const TabularPolicy t = l.to_tabular();
  EXPECT_DOUBLE_EQ(t.at(2, 4, 1), l.feed_forward(4, 1) + l.value(2, 1));
}

TEST(Linear, ApplyUsesChainRule) {
  LinearPolicy l = random_linear(4, 1);
  const LinearPolicy before = l;
  LogitGradient g(4);
  g.context(1, 2)[3] = 2.0;
  g.context(0, 2)[3] = 1.0;
  l.apply(g, 0.5);
  EXPECT_DOUBLE_EQ(l.feed_forward(2, 3), before.feed_forward(2, 3) - 0.5 * 3.0);
  EXPECT_DOUBLE_EQ(l.value(1, 3), before.value(1, 3) - 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(l.value(0, 3), before.value(0, 3) - 0.5 * 1.0);
  EXPECT_DOUBLE_EQ(l.value(2, 3), before.value(2, 3));
}

TEST(Decode, GreedyIsOneHotAtFirstMax) {
  TabularPolicy t(3);
  t.at(0, 1, 2) = 1.0;
  t.at(0, 1, 0) = 1.0;
  const auto q = next_distribution(Model{t}, 0, 1, DecodeConfig::greedy());
  EXPECT_EQ(q, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
  const auto nodes = node_distribution(Model{t}, 0, 1, DecodeConfig::temperature());
  EXPECT_EQ(nodes.size(), 3u);
  EXPECT_NEAR(nodes[0] + nodes[1] + nodes[2], 1.0, 1e-15);
}

TEST(Decode, RejectsNonPositiveTemperature) {
  EXPECT_THROW(DecodeConfig::temperature(0.0).validate(), std::invalid_argument);
}

TEST(Rollout, StartsWithPrefixAndStopsAtEos) {
  const Model m = random_tabular(6, 2);
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const Sequence s = rollout(m, 1, 4, DecodeConfig::temperature(), 10, rng);
    ASSERT_GE(s.tokens.size(), 4u);
    EXPECT_EQ(s.tokens[0], 1);
    EXPECT_EQ(s.tokens[1], 4);
    EXPECT_EQ(s.tokens[2], 1);
    EXPECT_LE(s.tokens.size(), 3u + 10u);
    for (std::size_t p = 3; p + 1 < s.tokens.size(); ++p) EXPECT_NE(s.tokens[p], 6);
  }
}

TEST(Rollout, EmpiricalFirstStepMatchesSoftmax) {
  const TabularPolicy t = random_tabular(4, 9);
  const Model m = t;
  const auto q = oracle::probs(std::vector<double>(t.logits(3, 0).begin(), t.logits(3, 0).end()));
  Rng rng(1);
  std::vector<double> freq(5, 0.0);
  const int draws = 40000;
  for (int k = 0; k < draws; ++k) freq[rollout(m, 0, 3, DecodeConfig::temperature(), 1, rng).tokens[3]] += 1.0 / draws;
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(freq[k], q[k], 0.01);
}

TEST(TerminalRollout, EndsAtTargetWithEos) {
  const Graph g(4, std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}});
  TabularPolicy t(4);
  for (int j = 0; j < 4; ++j) t.at(3, j, j + 1 < 4 ? j + 1 : 0) = 50.0;
  Rng rng(0);
  const Sequence s = terminal_rollout(Model{t}, 0, 3, DecodeConfig::greedy(), 10, 0.0, rng);
  EXPECT_EQ(s.tokens, (std::vector<int>{0, 3, 0, 1, 2, 3, 4}));
  // Pure exploration never emits EOS mid-way.
  for (int k = 0; k < 100; ++k) {
    const Sequence e = terminal_rollout(Model{t}, 0, 3, DecodeConfig::greedy(), 8, 1.0, rng);
    for (std::size_t p = 2; p + 1 < e.tokens.size(); ++p) EXPECT_LT(e.tokens[p], 4);
  }
}

TEST(ModelJson, RoundTripsBothKinds) {
  const Model a = random_tabular(5, 1);
  const Model b = random_linear(5, 2);
  EXPECT_EQ(std::get<TabularPolicy>(model_from_json(model_to_json(a))), std::get<TabularPolicy>(a));
  EXPECT_EQ(std::get<LinearPolicy>(model_from_json(model_to_json(b))), std::get<LinearPolicy>(b));
  EXPECT_EQ(model_kind(b), "linear");
  auto bad = model_to_json(a);
  bad["num_nodes"] = 7;
  EXPECT_THROW(model_from_json(bad), std::exception);
}
