#include <algorithm>
#include <stdexcept>
#include <string>

#include "plandyn/trainers.hpp"

namespace plandyn {

std::string_view to_string(RewardMode mode) {
  return mode == RewardMode::outcome ? "outcome" : "process";
}

std::string_view to_string(Behavior behavior) {
  return behavior == Behavior::on_policy ? "on_policy" : "off_policy";
}

RewardMode reward_mode_from_string(std::string_view s) {
  if (s == "outcome") return RewardMode::outcome;
  if (s == "process") return RewardMode::process;
  throw std::invalid_argument("unknown reward mode '" + std::string(s) + "'");
}

Behavior behavior_from_string(std::string_view s) {
  if (s == "on_policy") return Behavior::on_policy;
  if (s == "off_policy") return Behavior::off_policy;
  throw std::invalid_argument("unknown behavior '" + std::string(s) + "'");
}

double q_reward(const Graph& g, int target, int current, int next, bool trajectory_valid,
                RewardMode mode) {
  const double hit = next == target ? 1.0 : 0.0;
  if (mode == RewardMode::outcome) return trajectory_valid ? hit : 0.0;
  return hit - (g.has_edge(current, next) ? 0.0 : 1.0);
}

std::vector<QTransition> q_transitions(const Graph& g, const Sequence& trajectory, RewardMode mode) {
  const auto& tok = trajectory.tokens;
  const int n = g.num_nodes();
  const int eos = eos_token(n);
  if (tok.size() < 4) throw std::invalid_argument("q trajectory: fewer than 4 tokens");
  if (tok[0] != tok[2]) throw std::invalid_argument("q trajectory: prefix is not (s, t, s)");
  const int target = tok[1];
  for (int t : tok)
    if (t < 0 || t > eos) throw std::invalid_argument("q trajectory: token out of range");
  if (tok[0] == eos || target == eos || tok[0] == target)
    throw std::invalid_argument("q trajectory: source and target must be distinct nodes");

  // Only the outcome reward needs the whole-trajectory verdict.
  const bool valid = mode == RewardMode::outcome && validate_sequence(g, trajectory).valid();

  std::vector<QTransition> out;
  for (std::size_t p = 2; p + 1 < tok.size(); ++p) {
    const int cur = tok[p];
    const int next = tok[p + 1];
    if (next == eos) {
      if (cur != target || p + 2 != tok.size())
        throw std::invalid_argument("q trajectory: EOS must directly follow the target and end it");
      break;
    }
    if (cur == target) throw std::invalid_argument("q trajectory: continues past the target");
    out.push_back({target, cur, next, q_reward(g, target, cur, next, valid, mode)});
  }
  return out;
}

double q_bootstrap(const Model& m, int target, int next) {
  if (next == target) return 0.0;
  const auto row = logits_at(m, target, next);
  return *std::max_element(row.begin(), row.end() - 1);  // node tokens only
}

double q_loss(const Model& m, const Graph& g, const Sequence& trajectory, RewardMode mode) {
  double loss = 0.0;
  for (const auto& tr : q_transitions(g, trajectory, mode)) {
    const double f = logits_at(m, tr.target, tr.current)[static_cast<std::size_t>(tr.next)];
    const double diff = f - tr.reward - q_bootstrap(m, tr.target, tr.next);
    loss += diff * diff;
  }
  return loss;
}

LogitGradient q_gradient(const Model& m, const Graph& g, const Sequence& trajectory, RewardMode mode) {
  LogitGradient grad(num_nodes(m));
  for (const auto& tr : q_transitions(g, trajectory, mode)) {
    const double f = logits_at(m, tr.target, tr.current)[static_cast<std::size_t>(tr.next)];
    const double y = tr.reward + q_bootstrap(m, tr.target, tr.next);
    grad.context(tr.target, tr.current)[static_cast<std::size_t>(tr.next)] += 2.0 * (f - y);
  }
  return grad;
}

QStepResult q_step(Model& m, const Graph& g, const Sequence& trajectory, const QConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("QConfig: lr must be positive");
  QStepResult res;
  res.loss = q_loss(m, g, trajectory, cfg.reward_mode);
  res.transitions = q_transitions(g, trajectory, cfg.reward_mode).size();
  apply_gradient(m, q_gradient(m, g, trajectory, cfg.reward_mode), cfg.lr);
  return res;
}

Sequence q_rollout(const Model& behavior, int source, int target, const QConfig& cfg, Rng& rng) {
  return terminal_rollout(behavior, source, target, cfg.decode, cfg.max_len, cfg.epsilon, rng);
}

void train_q(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
             const QConfig& cfg, Rng& rng, const QHooks& hooks) {
  if (pairs.empty()) throw std::invalid_argument("train_q: no pairs");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0))
    throw std::invalid_argument("QConfig: epsilon must lie in [0, 1]");
  if (cfg.behavior == Behavior::off_policy && !base)
    throw std::invalid_argument("off-policy Q-learning needs a base model");
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto& [s, t] = pairs[uniform_index(rng, pairs.size())];
    const Model& behavior = cfg.behavior == Behavior::off_policy ? *base : m;
    const Sequence traj = q_rollout(behavior, s, t, cfg, rng);
    if (hooks.before) hooks.before(step, m, traj);
    q_step(m, g, traj, cfg);
    if (hooks.after) hooks.after(step, m, traj);
  }
}

}  // namespace plandyn
