#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "plandyn/corpus.hpp"
#include "plandyn/graph.hpp"
#include "plandyn/policy.hpp"
#include "plandyn/trainers.hpp"

namespace plandyn {

enum class TheoremId { T1, T2, T3, T4, T5, T6, T7, T8, PPO };

std::string_view to_string(TheoremId id);
TheoremId theorem_from_string(std::string_view s);  // throws std::invalid_argument
double default_threshold(TheoremId id);

struct TheoremReport {
  TheoremId id = TheoremId::T1;
  double residual = 0.0;
  double threshold = 0.0;
  bool pass = false;  // residual <= threshold
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json report_to_json(const TheoremReport& r);

// Process-reward fixed point of tabular Q-learning: A[j,i] for k == i,
// A[j,k] + R[i,k] - 1 otherwise.
double q_fixed_point(const Graph& g, int target, int current, int next);

// Watches tabular process-reward Q-learning and measures, for every updated
// coordinate whose own error dominates the error of its bootstrap target,
// the per-update error ratio |e_after / e_before|^(1/m) (m = updates of the
// coordinate in that episode).
class ContractionTracker {
 public:
  ContractionTracker(const Graph& g, double lr, double min_error = 1e-9, double dominance = 10.0);

  void before(const Model& m, const Sequence& trajectory);
  void after(const Model& m);
  QHooks hooks();

  double max_ratio() const { return max_ratio_; }
  double bound() const;  // |1 - 2 lr|
  std::size_t samples() const { return samples_; }
  nlohmann::json details() const;

 private:
  struct Pending {
    int target, current, next, multiplicity;
    double error;
  };
  const Graph& g_;
  double lr_, min_error_, dominance_;
  std::vector<Pending> pending_;
  double max_ratio_ = 0.0;
  std::size_t samples_ = 0;
};

// Inputs for verify_theorem. Each check reads only what it needs and throws
// std::invalid_argument naming anything missing.
struct TheoremBundle {
  const Graph* graph = nullptr;
  const Model* model = nullptr;
  const Model* base = nullptr;
  const CountTensor* counts = nullptr;
  std::vector<Pair> pairs;
  PgConfig pg;
  std::uint64_t seed = 0;
  std::size_t batches = 100;        // T2, T3, PPO
  std::size_t simulations = 10000;  // T4
  int context_target = -1;          // T4; picked automatically when negative
  int context_current = -1;
  double min_visits = 0.05;  // T5: expected visits per rollout for a context to count
  double min_prob = 0.01;    // T5: supported-token probability
  const ContractionTracker* contraction = nullptr;  // T7, optional
  std::optional<double> threshold;
};

TheoremReport verify_theorem(TheoremId id, const TheoremBundle& bundle);

}  // namespace plandyn
