#include <gtest/gtest.h>

#include "oracles.hpp"
#include "plandyn/analysis.hpp"

using namespace plandyn;

namespace {

TabularPolicy random_tabular(int n, std::uint64_t seed) {
  TabularPolicy t(n);
  Rng rng(seed);
  for (double& x : t.data()) x = 3.0 * uniform01(rng) - 1.5;
  return t;
}

oracle::Matrix matrix_of(const Graph& g) {
  oracle::Matrix a(g.num_nodes(), std::vector<int>(g.num_nodes(), 0));
  for (auto [u, v] : g.edges()) a[u][v] = 1;
  return a;
}

// Boost feasible logits so valid paths carry real mass.
TabularPolicy planner_like(const Graph& g, std::uint64_t seed) {
  TabularPolicy t = random_tabular(g.num_nodes(), seed);
  for (int i = 0; i < g.num_nodes(); ++i) {
    for (int j = 0; j < g.num_nodes(); ++j)
      for (int k : feasible_next(g, i, j).members) t.at(i, j, k) += 3.0;
    t.at(i, i, g.num_nodes()) += 4.0;
  }
  return t;
}

}  // namespace

TEST(ExactMetrics, AccuracyMatchesPathEnumeration) {
  const Graph g = gen_erdos_renyi_dag(8, 0.4, 2);
  const Model m = planner_like(g, 3);
  const auto a = matrix_of(g);
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature();
  opts.max_len = 64;
  const auto pairs = reachable_pairs(g);
  double expect = 0.0;
  for (auto [s, t] : pairs) {
    double p = 0.0;
    for (double x : oracle::valid_path_probabilities(a, s, t, [&](int i, int j) { return oracle::probs(logits_at(m, i, j)); }))
      p += x;
    expect += p / pairs.size();
  }
  EXPECT_NEAR(exact_accuracy(m, g, pairs, opts), expect, 1e-12);
}

TEST(ExactMetrics, ExpectedDiversityMatchesPathEnumeration) {
  const Graph g = gen_erdos_renyi_dag(8, 0.45, 5);
  const Model m = planner_like(g, 6);
  const auto a = matrix_of(g);
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature();
  opts.trials = 20;
  const auto pairs = reachable_pairs(g);
  double expect = 0.0;
  for (auto [s, t] : pairs) {
    for (double p : oracle::valid_path_probabilities(a, s, t, [&](int i, int j) { return oracle::probs(logits_at(m, i, j)); }))
      expect += (1.0 - std::pow(1.0 - p, 20)) / pairs.size();
  }
  EXPECT_NEAR(expected_diversity(m, g, pairs, opts, 0.0), expect, 1e-10);
}

TEST(ExactMetrics, TemperatureAndShortHorizon) {
  const Graph g(4, std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const Model m = planner_like(g, 1);
  const auto a = matrix_of(g);
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature(0.5);
  // Only the direct edge fits in two generated tokens (node + EOS).
  opts.max_len = 2;
  auto q = [&](int i, int j) {
    auto row = logits_at(m, i, j);
    for (double& x : row) x /= 0.5;
    return oracle::probs(row);
  };
  const double direct = q(3, 0)[3] * q(3, 3)[4];
  EXPECT_NEAR(exact_accuracy(m, g, std::vector<Pair>{{0, 3}}, opts), direct, 1e-14);
  opts.max_len = 10;
  double all = 0.0;
  for (double p : oracle::valid_path_probabilities(a, 0, 3, q)) all += p;
  EXPECT_NEAR(exact_accuracy(m, g, std::vector<Pair>{{0, 3}}, opts), all, 1e-14);
}

TEST(ExactMetrics, MonteCarloAgrees) {
  const Graph g = gen_erdos_renyi_dag(10, 0.35, 8);
  const Model m = planner_like(g, 9);
  const auto pairs = reachable_pairs(g);
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature();
  opts.trials = 400;
  Rng rng(4);
  const auto stats = sample_stats(m, g, pairs, opts, rng);
  EXPECT_NEAR(stats.accuracy, exact_accuracy(m, g, pairs, opts), 0.02);
  EXPECT_NEAR(stats.diversity, expected_diversity(m, g, pairs, opts), 0.15 * stats.diversity + 0.1);
}

TEST(ExactMetrics, TerminalStyleIgnoresEos) {
  const Graph g(3, std::vector<Edge>{{0, 1}, {1, 2}});
  TabularPolicy t(3);
  for (int j = 0; j < 3; ++j) t.at(2, j, 3) = 50.0;  // EOS would dominate in language style
  EvalOptions opts;
  opts.decode = DecodeConfig::greedy();
  opts.style = RolloutStyle::language;
  EXPECT_EQ(exact_accuracy(Model{t}, g, std::vector<Pair>{{0, 2}}, opts), 0.0);
  t.at(2, 0, 1) = 1.0;
  t.at(2, 1, 2) = 1.0;
  opts.style = RolloutStyle::terminal;
  EXPECT_EQ(exact_accuracy(Model{t}, g, std::vector<Pair>{{0, 2}}, opts), 1.0);
  Rng rng(0);
  EXPECT_EQ(accuracy(Model{t}, g, std::vector<Pair>{{0, 2}}, opts, rng), 1.0);
}

TEST(Diversity, CountsDistinctValidOutputs) {
  const Graph g(4, std::vector<Edge>{{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  TabularPolicy t(4);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k <= 4; ++k) t.at(3, j, k) = kMaskedLogit;
  t.at(3, 0, 1) = t.at(3, 0, 2) = 0.0;
  t.at(3, 1, 3) = t.at(3, 2, 3) = 0.0;
  t.at(3, 3, 4) = 0.0;
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature();
  opts.trials = 200;
  Rng rng(3);
  EXPECT_EQ(output_diversity(Model{t}, g, std::vector<Pair>{{0, 3}}, opts, rng), 2.0);
  EXPECT_NEAR(expected_diversity(Model{t}, g, std::vector<Pair>{{0, 3}}, opts), 2.0, 1e-12);
}

TEST(Kl, UniformIsZeroAndHandValue) {
  const Graph g(4, std::vector<Edge>{{0, 1}, {0, 2}, {1, 3}, {2, 3}, {0, 3}});
  TabularPolicy t(4);
  EXPECT_NEAR(kl_to_uniform(Model{t}, g, 3, 0), 0.0, 1e-15);
  t.at(3, 0, 1) = std::log(2.0);  // restricted to C = {1, 2, 3}: q = (1/2, 1/4, 1/4)
  const double expect = (1.0 / 3) * (std::log((1.0 / 3) / 0.5) + 2 * std::log((1.0 / 3) / 0.25));
  EXPECT_NEAR(kl_to_uniform(Model{t}, g, 3, 0), expect, 1e-14);
  // Invalid mass: tokens 0 and EOS, out of weights (1,2,1,1,1).
  EXPECT_NEAR(invalid_mass(Model{t}, g, 3, 0), 2.0 / 6.0, 1e-14);
  EXPECT_THROW(kl_to_uniform(Model{t}, g, 0, 3), std::invalid_argument);
}

TEST(Auc, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_dag(9, 0.3, rng);
    std::vector<Edge> edges;
    for (int u = 0; u < 9; ++u)
      for (int v = 0; v < 9; ++v)
        if (a[u][v]) edges.emplace_back(u, v);
    if (edges.empty()) continue;
    const Graph g(9, edges);
    std::vector<double> scores(81);
    for (double& s : scores) s = static_cast<double>(rng() % 5);  // many ties
    EXPECT_NEAR(adjacency_auc(scores, g), oracle::brute_auc(scores, a), 1e-12);
  }
}

TEST(Auc, PerfectScoresAndLinearModel) {
  const Graph g = gen_erdos_renyi_dag(10, 0.3, 4);
  LinearPolicy l(10);
  for (auto [u, v] : g.edges()) l.feed_forward(u, v) = 1.0;
  EXPECT_EQ(adjacency_recovery(Model{l}, g), 1.0);
  const Graph empty(3, std::vector<Edge>{});
  EXPECT_THROW(adjacency_auc(std::vector<double>(9, 0.0), empty), std::invalid_argument);
}

TEST(Heatmap, RowNormalisationAndMask) {
  const Graph g(3, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}});
  TabularPolicy t(3);
  t.at(2, 0, 0) = -1.0;
  t.at(2, 0, 1) = 1.0;
  t.at(2, 0, 2) = 3.0;
  const std::vector<int> nodes{0, 1, 2};
  const auto h = snapshot_logits(Model{t}, g, 0, nodes, nodes);
  EXPECT_EQ(h.values[2], (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_EQ(h.values[1], (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(h.feasible[2], (std::vector<bool>{false, true, true}));
  const auto back = heatmap_from_json(heatmap_to_json(h));
  EXPECT_EQ(back.values, h.values);
  EXPECT_EQ(back.feasible, h.feasible);
  auto broken = heatmap_to_json(h);
  broken["values"].erase(0);
  EXPECT_THROW(heatmap_from_json(broken), std::exception);
}

TEST(Csv, HeaderAndQuotedExtra) {
  EXPECT_EQ(csv_header(), "step,train_acc,test_acc,diversity,kl_uniform_mean,invalid_mass,adjacency_auc,extra_json");
  RunRecord r;
  r.step = 5;
  r.train_acc = 0.5;
  r.extra["a"] = "x";
  EXPECT_EQ(to_csv_row(r), "5,0.5,0,0,0,0,0,\"{\"\"a\"\":\"\"x\"\"}\"");
}
