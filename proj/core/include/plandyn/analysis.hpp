#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plandyn/corpus.hpp"
#include "plandyn/graph.hpp"
#include "plandyn/policy.hpp"

namespace plandyn {

// language: free generation over the whole vocabulary, judged by
// validate_sequence. terminal: node-only generation that stops at the target
// (how Q-learned models act).
enum class RolloutStyle { language, terminal };

struct EvalOptions {
  DecodeConfig decode = DecodeConfig::greedy();
  std::size_t trials = 1;  // forced to 1 under greedy decoding
  std::size_t max_len = 64;
  RolloutStyle style = RolloutStyle::language;
};

Sequence eval_rollout(const Model& m, int source, int target, const EvalOptions& opts, Rng& rng);

// Fraction of (pair, trial) rollouts that validate.
double accuracy(const Model& m, const Graph& g, std::span<const Pair> pairs, const EvalOptions& opts,
                Rng& rng);

// Mean over pairs of the number of distinct valid token sequences among
// `opts.trials` samples.
double output_diversity(const Model& m, const Graph& g, std::span<const Pair> pairs,
                        const EvalOptions& opts, Rng& rng);

struct SampleStats {
  double accuracy = 0.0;
  double diversity = 0.0;
};

// Both metrics from one shared set of samples.
SampleStats sample_stats(const Model& m, const Graph& g, std::span<const Pair> pairs,
                         const EvalOptions& opts, Rng& rng);

// KL(U_C || q restricted to C and renormalised), C = C(target, current).
// Throws std::invalid_argument when C is empty.
double kl_to_uniform(const Model& m, const Graph& g, int target, int current);
double kl_to_uniform(std::span<const double> logits, const FeasibleSet& c);
// Softmax mass outside C(target, current).
double invalid_mass(const Model& m, const Graph& g, int target, int current);

struct FeasibilityStats {
  double kl_uniform_mean = 0.0;
  double invalid_mass_mean = 0.0;
  std::size_t contexts = 0;
};

// Averages over contexts (i, j) with i a target of `pairs`, j != i and j
// able to reach i.
FeasibilityStats feasibility_stats(const Model& m, const Graph& g, std::span<const Pair> pairs);

std::vector<int> pair_targets(std::span<const Pair> pairs);

// Row-major n x n scores for (current j, next k): W_M[j,k] for the linear
// model, max over targets i != j of f(i,j)[k] for the tabular one.
std::vector<double> edge_scores(const Model& m);
// P(score of a random edge > score of a random non-edge), ties counting one
// half, over off-diagonal cells. Throws when either class is empty.
double adjacency_auc(std::span<const double> scores, const Graph& g);
double adjacency_recovery(const Model& m, const Graph& g);

// Exact probability that a rollout from each node j reaches `target` validly
// within opts.max_len generated tokens (nodes for terminal style).
std::vector<double> success_values(const Model& m, const Graph& g, int target, const EvalOptions& opts);
double exact_accuracy(const Model& m, const Graph& g, std::span<const Pair> pairs, const EvalOptions& opts);

// Expected number of distinct valid outputs in opts.trials samples,
// sum over valid paths of 1 - (1 - P(path))^trials, averaged over pairs.
// Prefixes with probability below `prune` are dropped; the error is at most
// trials times the dropped mass.
double expected_diversity(const Model& m, const Graph& g, std::span<const Pair> pairs,
                          const EvalOptions& opts, double prune = 1e-12);

struct LogitHeatmap {
  int current = 0;
  std::size_t step = 0;
  std::vector<int> rows;  // targets
  std::vector<int> cols;  // candidate next nodes
  std::vector<std::vector<double>> values;  // per-row min-max normalised
  std::vector<std::vector<bool>> feasible;
};

// Zero-range rows map to 0.5.
LogitHeatmap snapshot_logits(const Model& m, const Graph& g, int current, std::span<const int> targets,
                             std::span<const int> cols);
nlohmann::json heatmap_to_json(const LogitHeatmap& h);
LogitHeatmap heatmap_from_json(const nlohmann::json& j);

struct RunRecord {
  std::size_t step = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double diversity = 0.0;
  double kl_uniform_mean = 0.0;
  double invalid_mass = 0.0;
  double adjacency_auc = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

std::string csv_header();
std::string to_csv_row(const RunRecord& r);
std::string format_number(double x);

}  // namespace plandyn
