#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plandyn/corpus.hpp"
#include "plandyn/graph.hpp"
#include "plandyn/policy.hpp"

namespace plandyn {

using StepCallback = std::function<void(std::size_t step, const Model& model)>;

// Adds d/df of -sum_k w_k log softmax(f(i,j))[k] for every context with
// nonzero weights: -w_k + q_k * sum_k' w_k'.
void add_cross_entropy_gradient(const Model& m, const CountTensor& weights, LogitGradient& grad);

// --- SFT -------------------------------------------------------------------

struct SftConfig {
  double lr = 0.1;
  std::size_t steps = 1000;
  // 0 trains on the full count tensor each step; otherwise each step draws
  // this many sequences uniformly with replacement.
  std::size_t batch = 0;
};

double sft_loss(const Model& m, const CountTensor& counts);
LogitGradient sft_gradient(const Model& m, const CountTensor& counts);
// One descent step; returns the loss before the update.
double sft_step(Model& m, const CountTensor& counts, const SftConfig& cfg);
double sft_step(Model& m, std::span<const Sequence> batch, const SftConfig& cfg);

struct StablePointReport {
  double residual = 0.0;
  int target = -1, current = -1, next = -1;  // worst offender
  bool pass = false;
};

// max over contexts with counts of |softmax(f(i,j))[k] - N[i,j,k] / sum_k' N[i,j,k']|.
StablePointReport check_sft_stable_point(const Model& m, const CountTensor& counts, double tol);

void train_sft(Model& m, const CountTensor& counts, const SftConfig& cfg, const StepCallback& on_step = {});
void train_sft(Model& m, std::span<const Sequence> corpus, const SftConfig& cfg, Rng& rng,
               const StepCallback& on_step = {});

// --- policy gradient ---------------------------------------------------------

struct PgConfig {
  double r = 1.0;       // reward for a valid path
  double p = 0.0;       // reward offset paid to every rollout
  double lambda = 0.0;  // weight of the detached KL term
  double lr = 0.1;
  std::size_t rollouts_per_step = 64;
  std::size_t steps = 1000;
  std::size_t max_len = 64;
  DecodeConfig decode;
};

struct RolloutCounts {
  CountTensor all;      // every transition of every rollout
  CountTensor correct;  // transitions of rollouts that validate
  std::size_t num_rollouts = 0;
  std::size_t num_valid = 0;

  explicit RolloutCounts(int num_nodes = 0) : all(num_nodes), correct(num_nodes) {}
};

RolloutCounts count_rollouts(std::span<const Sequence> rollouts, const Graph& g);

// Long-run per-triple update frequency: total count divided by the number of
// accumulated steps.
class VisitFrequency {
 public:
  explicit VisitFrequency(int num_nodes) : totals_(num_nodes) {}
  void add(const CountTensor& counts);
  std::size_t steps() const { return steps_; }
  double frequency(int target, int current, int next) const;
  const CountTensor& totals() const { return totals_; }

 private:
  CountTensor totals_;
  std::size_t steps_ = 0;
};

// -sum R log q + lambda * sum log q * {log(q / q_base)}, braces detached,
// R = r * [valid] + p. `base` may be null when lambda == 0.
double pg_loss(const Model& m, const RolloutCounts& counts, const PgConfig& cfg, const Model* base);
LogitGradient pg_gradient(const Model& m, const RolloutCounts& counts, const PgConfig& cfg,
                          const Model* base);

// Pairs are drawn uniformly with replacement.
std::vector<Sequence> sample_rollouts(const Model& m, std::span<const Pair> pairs, std::size_t count,
                                      const DecodeConfig& decode, std::size_t max_len, Rng& rng);

struct PgStepResult {
  std::vector<Sequence> rollouts;
  RolloutCounts counts;
  double loss = 0.0;  // before the update
};

// On-policy rollouts, then a gradient step. Throws when lambda > 0 and no
// base model is given.
PgStepResult pg_step(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
                     const PgConfig& cfg, Rng& rng);
void pg_update(Model& m, const Model* base, const RolloutCounts& counts, const PgConfig& cfg);

void train_pg(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
              const PgConfig& cfg, Rng& rng, const StepCallback& on_step = {});

// Unclipped PPO: -sum R * q / q_old with q_old frozen at rollout time.
using BehaviorSnapshot = std::map<int, std::vector<double>>;  // context index -> q_old

BehaviorSnapshot snapshot_behavior_probs(const Model& m, const RolloutCounts& counts);
double ppo_unclipped_loss(const Model& m, const RolloutCounts& counts, const BehaviorSnapshot& old,
                          const PgConfig& cfg);
LogitGradient ppo_unclipped_gradient(const Model& m, const RolloutCounts& counts,
                                     const BehaviorSnapshot& old, const PgConfig& cfg);
void ppo_unclipped_step(Model& m, const RolloutCounts& counts, const BehaviorSnapshot& old,
                        const PgConfig& cfg);

// --- Q-learning ----------------------------------------------------------------

enum class RewardMode { outcome, process };
enum class Behavior { on_policy, off_policy };

std::string_view to_string(RewardMode mode);
std::string_view to_string(Behavior behavior);
RewardMode reward_mode_from_string(std::string_view s);
Behavior behavior_from_string(std::string_view s);

struct QConfig {
  RewardMode reward_mode = RewardMode::process;
  double epsilon = 0.1;
  Behavior behavior = Behavior::on_policy;
  double lr = 0.05;
  std::size_t steps = 10000;  // episodes
  std::size_t max_len = 64;
  DecodeConfig decode;        // behavior sampling over node tokens
};

// outcome: [valid] * [next == target]; process: [next == target] - [no edge].
double q_reward(const Graph& g, int target, int current, int next, bool trajectory_valid,
                RewardMode mode);

struct QTransition {
  int target, current, next;
  double reward;
};

// Transitions u_m -> u_{m+1} of a target-terminated trajectory, EOS excluded.
// Throws std::invalid_argument on a malformed trajectory.
std::vector<QTransition> q_transitions(const Graph& g, const Sequence& trajectory, RewardMode mode);

// sum_m (f(i,u_m)[u_{m+1}] - R - {max_k f(i,u_{m+1})[k]})^2, the max taken over
// node tokens, detached, and replaced by 0 when u_{m+1} is the target.
double q_loss(const Model& m, const Graph& g, const Sequence& trajectory, RewardMode mode);
LogitGradient q_gradient(const Model& m, const Graph& g, const Sequence& trajectory, RewardMode mode);
double q_bootstrap(const Model& m, int target, int next);

struct QStepResult {
  double loss = 0.0;  // before the update
  std::size_t transitions = 0;
};

QStepResult q_step(Model& m, const Graph& g, const Sequence& trajectory, const QConfig& cfg);

// Behavior rollout: with probability epsilon a uniform node, otherwise a draw
// from the behavior model's node distribution; ends at the target or max_len.
Sequence q_rollout(const Model& behavior, int source, int target, const QConfig& cfg, Rng& rng);

// Observers of each episode: `before` sees the model the update starts from,
// `after` the updated one.
struct QHooks {
  std::function<void(std::size_t step, const Model& m, const Sequence& trajectory)> before;
  std::function<void(std::size_t step, const Model& m, const Sequence& trajectory)> after;
};

// One episode per step on a uniformly drawn pair. Off-policy runs sample
// from `base`, which must then be non-null.
void train_q(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
             const QConfig& cfg, Rng& rng, const QHooks& hooks = {});

}  // namespace plandyn
