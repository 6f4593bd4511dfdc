#include <gtest/gtest.h>

#include "oracles.hpp"
#include "plandyn/theorems.hpp"

using namespace plandyn;

namespace {

TabularPolicy biased_tabular(const Graph& g, std::uint64_t seed) {
  TabularPolicy t(g.num_nodes());
  Rng rng(seed);
  for (double& x : t.data()) x = 2.0 * uniform01(rng) - 1.0;
  for (int i = 0; i < g.num_nodes(); ++i) {
    for (int j = 0; j < g.num_nodes(); ++j)
      for (int k : feasible_next(g, i, j).members) t.at(i, j, k) += 3.0;
    t.at(i, i, g.num_nodes()) += 3.0;
  }
  return t;
}

}  // namespace

TEST(Ids, ParseAndPrint) {
  for (auto id : {TheoremId::T1, TheoremId::T5, TheoremId::PPO})
    EXPECT_EQ(theorem_from_string(to_string(id)), id);
  EXPECT_THROW(theorem_from_string("T9"), std::invalid_argument);
}

TEST(FixedPoint, ProcessRewardTable) {
  // 0 -> 1 -> 2 and 0 -> 3; target 2.
  const Graph g(4, std::vector<Edge>{{0, 1}, {1, 2}, {0, 3}});
  EXPECT_EQ(q_fixed_point(g, 2, 1, 2), 1.0);   // edge onto target
  EXPECT_EQ(q_fixed_point(g, 2, 0, 2), 0.0);   // target without an edge
  EXPECT_EQ(q_fixed_point(g, 2, 0, 1), 1.0);   // edge, still reaches target
  EXPECT_EQ(q_fixed_point(g, 2, 0, 3), 0.0);   // edge into a dead end
  EXPECT_EQ(q_fixed_point(g, 2, 3, 1), 0.0);   // no edge, reaches target
  EXPECT_EQ(q_fixed_point(g, 2, 1, 3), -1.0);  // no edge, dead end
}

TEST(Checks, PgIdentitiesHoldOnRandomModel) {
  const Graph g = gen_erdos_renyi_dag(10, 0.3, 2);
  const Model m = biased_tabular(g, 3);
  TheoremBundle b;
  b.graph = &g;
  b.model = &m;
  b.pairs = reachable_pairs(g);
  b.batches = 20;
  b.pg.rollouts_per_step = 32;
  for (auto id : {TheoremId::T2, TheoremId::T3, TheoremId::PPO}) {
    const auto r = verify_theorem(id, b);
    EXPECT_TRUE(r.pass) << to_string(id) << " residual " << r.residual;
  }
  EXPECT_GT(verify_theorem(TheoremId::T3, b).details["infeasible_entries"].get<int>(), 0);
}

TEST(Checks, MissingInputsAreReported) {
  TheoremBundle b;
  EXPECT_THROW(verify_theorem(TheoremId::T1, b), std::invalid_argument);
  const Graph g(3, std::vector<Edge>{{0, 1}, {1, 2}});
  const Model tab = TabularPolicy(3);
  b.graph = &g;
  b.model = &tab;
  b.pairs = {{0, 2}};
  EXPECT_THROW(verify_theorem(TheoremId::T8, b), std::invalid_argument);
}

TEST(Checks, T6FlagsNonConstantRows) {
  const Graph g(3, std::vector<Edge>{{0, 1}, {1, 2}});
  TabularPolicy t(3);
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 3; ++k) t.at(2, j, k) = 0.7;
  t.at(2, 0, 2) = 5.0;  // the target column is excluded
  Model m = t;
  TheoremBundle b;
  b.graph = &g;
  b.model = &m;
  b.pairs = {{0, 2}};
  EXPECT_TRUE(verify_theorem(TheoremId::T6, b).pass);
  std::get<TabularPolicy>(m).at(2, 1, 0) = 0.9;
  EXPECT_NEAR(verify_theorem(TheoremId::T6, b).residual, 0.2, 1e-12);
}

TEST(Checks, T8AcceptsExactGaugeSolution) {
  const Graph g = gen_erdos_renyi_dag(6, 0.4, 1);
  LinearPolicy l(6);
  // W_M = A - 1 + c_k and W_V = R - c_k solve the fixed point for any gauge c.
  for (int k = 0; k < 6; ++k) {
    const double c = 0.1 * k - 0.2;
    for (int a = 0; a < 6; ++a) {
      l.feed_forward(a, k) = (g.has_edge(a, k) ? 1.0 : 0.0) - 1.0 + c;
      l.value(a, k) = (g.reaches(a, k) ? 1.0 : 0.0) - c;
    }
  }
  const Model m = l;
  TheoremBundle b;
  b.graph = &g;
  b.model = &m;
  b.pairs = reachable_pairs(g);
  const auto r = verify_theorem(TheoremId::T8, b);
  EXPECT_LT(r.residual, 1e-12);
  l.feed_forward(0, 3) += 0.2;
  const Model bad = l;
  b.model = &bad;
  EXPECT_FALSE(verify_theorem(TheoremId::T8, b).pass);
}

TEST(Checks, T1UsesCountsAndThreshold) {
  CountTensor c(2);
  c(1, 0, 1) = 2;
  c(1, 1, 2) = 2;
  TabularPolicy t(2);
  t.at(1, 0, 1) = 30.0;
  t.at(1, 1, 2) = 30.0;
  const Model m = t;
  TheoremBundle b;
  b.model = &m;
  b.counts = &c;
  EXPECT_TRUE(verify_theorem(TheoremId::T1, b).pass);
  b.threshold = 1e-30;
  EXPECT_FALSE(verify_theorem(TheoremId::T1, b).pass);
}

TEST(Contraction, TrackerSeesGeometricDecayOnChain) {
  const Graph g(3, std::vector<Edge>{{0, 1}, {1, 2}});
  Model m = TabularPolicy(3);
  QConfig cfg;
  cfg.epsilon = 1.0;
  cfg.lr = 0.05;
  cfg.steps = 4000;
  cfg.max_len = 16;
  ContractionTracker tracker(g, cfg.lr);
  Rng rng(2);
  const std::vector<Pair> pairs{{0, 2}};
  train_q(m, nullptr, g, pairs, cfg, rng, tracker.hooks());
  EXPECT_GT(tracker.samples(), 0u);
  EXPECT_NEAR(tracker.bound(), 0.9, 1e-15);
  EXPECT_LE(tracker.max_ratio(), tracker.bound() + 0.05);
  TheoremBundle b;
  b.graph = &g;
  b.model = &m;
  b.pairs = pairs;
  b.contraction = &tracker;
  const auto r = verify_theorem(TheoremId::T7, b);
  EXPECT_TRUE(r.pass) << r.residual;
  EXPECT_TRUE(r.details.contains("contraction"));
}
