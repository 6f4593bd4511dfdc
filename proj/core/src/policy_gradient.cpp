#include <cmath>
#include <stdexcept>

#include "plandyn/trainers.hpp"

namespace plandyn {

namespace {

void check_base(const Model& m, const PgConfig& cfg, const Model* base) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("PgConfig: lambda must be >= 0");
  if (cfg.lambda > 0.0) {
    if (!base) throw std::invalid_argument("policy gradient with lambda > 0 needs a base model");
    if (num_nodes(*base) != num_nodes(m)) throw std::invalid_argument("base model shape mismatch");
  }
}

CountTensor reward_weights(const RolloutCounts& counts, const PgConfig& cfg) {
  CountTensor w(counts.all.num_nodes());
  const auto all = counts.all.data();
  const auto ok = counts.correct.data();
  const int n = w.num_nodes();
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k <= n; ++k, ++idx) w(i, j, k) = cfg.r * ok[idx] + cfg.p * all[idx];
  return w;
}

bool any_nonzero(std::span<const double> row) {
  for (double x : row)
    if (x != 0.0) return true;
  return false;
}

}  // namespace

RolloutCounts count_rollouts(std::span<const Sequence> rollouts, const Graph& g) {
  RolloutCounts c(g.num_nodes());
  for (const auto& seq : rollouts) {
    c.all.add(seq);
    ++c.num_rollouts;
    if (validate_sequence(g, seq).valid()) {
      c.correct.add(seq);
      ++c.num_valid;
    }
  }
  return c;
}

void VisitFrequency::add(const CountTensor& counts) {
  totals_ += counts;
  ++steps_;
}

double VisitFrequency::frequency(int target, int current, int next) const {
  return steps_ == 0 ? 0.0 : totals_(target, current, next) / static_cast<double>(steps_);
}

double pg_loss(const Model& m, const RolloutCounts& counts, const PgConfig& cfg, const Model* base) {
  check_base(m, cfg, base);
  const int n = num_nodes(m);
  const CountTensor w = reward_weights(counts, cfg);
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  std::vector<double> base_logits(logits.size());
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto wr = w.row(i, j);
      const auto all = counts.all.row(i, j);
      const bool kl = cfg.lambda > 0.0 && any_nonzero(all);
      if (!any_nonzero(wr) && !kl) continue;
      logits_into(m, i, j, logits);
      const auto lq = log_softmax(logits);
      for (std::size_t k = 0; k < lq.size(); ++k)
        if (wr[k] != 0.0) loss -= wr[k] * lq[k];
      if (kl) {
        logits_into(*base, i, j, base_logits);
        const auto lb = log_softmax(base_logits);
        for (std::size_t k = 0; k < lq.size(); ++k)
          if (all[k] != 0.0) loss += cfg.lambda * all[k] * lq[k] * (lq[k] - lb[k]);
      }
    }
  }
  return loss;
}

LogitGradient pg_gradient(const Model& m, const RolloutCounts& counts, const PgConfig& cfg,
                          const Model* base) {
  check_base(m, cfg, base);
  const int n = num_nodes(m);
  LogitGradient grad(n);
  add_cross_entropy_gradient(m, reward_weights(counts, cfg), grad);
  if (cfg.lambda == 0.0) return grad;

  // d/df_k of lambda * sum_k' N_k' d_k' log q_k' with d detached:
  // lambda * (N_k d_k - q_k * sum_k' N_k' d_k').
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  std::vector<double> base_logits(logits.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto all = counts.all.row(i, j);
      if (!any_nonzero(all)) continue;
      logits_into(m, i, j, logits);
      logits_into(*base, i, j, base_logits);
      const auto lq = log_softmax(logits);
      const auto lb = log_softmax(base_logits);
      const auto q = softmax(logits);
      double weighted = 0.0;
      for (std::size_t k = 0; k < q.size(); ++k) weighted += all[k] * (lq[k] - lb[k]);
      auto g = grad.context(i, j);
      for (std::size_t k = 0; k < q.size(); ++k)
        g[k] += cfg.lambda * (all[k] * (lq[k] - lb[k]) - q[k] * weighted);
    }
  }
  return grad;
}

std::vector<Sequence> sample_rollouts(const Model& m, std::span<const Pair> pairs, std::size_t count,
                                      const DecodeConfig& decode, std::size_t max_len, Rng& rng) {
  if (pairs.empty()) throw std::invalid_argument("sample_rollouts: no pairs");
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const auto& [s, t] = pairs[uniform_index(rng, pairs.size())];
    out.push_back(rollout(m, s, t, decode, max_len, rng));
  }
  return out;
}

void pg_update(Model& m, const Model* base, const RolloutCounts& counts, const PgConfig& cfg) {
  apply_gradient(m, pg_gradient(m, counts, cfg, base), cfg.lr);
}

PgStepResult pg_step(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
                     const PgConfig& cfg, Rng& rng) {
  check_base(m, cfg, base);
  if (cfg.rollouts_per_step < 1) throw std::invalid_argument("PgConfig: rollouts_per_step must be >= 1");
  PgStepResult res;
  res.rollouts = sample_rollouts(m, pairs, cfg.rollouts_per_step, cfg.decode, cfg.max_len, rng);
  res.counts = count_rollouts(res.rollouts, g);
  res.loss = pg_loss(m, res.counts, cfg, base);
  pg_update(m, base, res.counts, cfg);
  return res;
}

void train_pg(Model& m, const Model* base, const Graph& g, std::span<const Pair> pairs,
              const PgConfig& cfg, Rng& rng, const StepCallback& on_step) {
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    pg_step(m, base, g, pairs, cfg, rng);
    if (on_step) on_step(step, m);
  }
}

BehaviorSnapshot snapshot_behavior_probs(const Model& m, const RolloutCounts& counts) {
  const int n = num_nodes(m);
  BehaviorSnapshot snap;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (any_nonzero(counts.all.row(i, j))) snap[i * n + j] = softmax(logits_at(m, i, j));
  return snap;
}

namespace {

const std::vector<double>& old_probs(const BehaviorSnapshot& old, int ctx) {
  const auto it = old.find(ctx);
  if (it == old.end()) throw std::invalid_argument("behavior snapshot misses a visited context");
  return it->second;
}

}  // namespace

double ppo_unclipped_loss(const Model& m, const RolloutCounts& counts, const BehaviorSnapshot& old,
                          const PgConfig& cfg) {
  const int n = num_nodes(m);
  const CountTensor w = reward_weights(counts, cfg);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto wr = w.row(i, j);
      if (!any_nonzero(wr)) continue;
      const auto q = softmax(logits_at(m, i, j));
      const auto& q_old = old_probs(old, i * n + j);
      for (std::size_t k = 0; k < q.size(); ++k)
        if (wr[k] != 0.0) loss -= wr[k] * q[k] / q_old[k];
    }
  }
  return loss;
}

LogitGradient ppo_unclipped_gradient(const Model& m, const RolloutCounts& counts,
                                     const BehaviorSnapshot& old, const PgConfig& cfg) {
  const int n = num_nodes(m);
  const CountTensor w = reward_weights(counts, cfg);
  LogitGradient grad(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto wr = w.row(i, j);
      if (!any_nonzero(wr)) continue;
      const auto q = softmax(logits_at(m, i, j));
      const auto& q_old = old_probs(old, i * n + j);
      auto g = grad.context(i, j);
      // d(q_k'/q_old_k')/df_k = (q_k'/q_old_k') * (delta_kk' - q_k)
      for (std::size_t kp = 0; kp < q.size(); ++kp) {
        if (wr[kp] == 0.0) continue;
        const double ratio = q[kp] / q_old[kp];
        for (std::size_t k = 0; k < q.size(); ++k)
          g[k] -= wr[kp] * ratio * ((k == kp ? 1.0 : 0.0) - q[k]);
      }
    }
  }
  return grad;
}

void ppo_unclipped_step(Model& m, const RolloutCounts& counts, const BehaviorSnapshot& old,
                        const PgConfig& cfg) {
  apply_gradient(m, ppo_unclipped_gradient(m, counts, old, cfg), cfg.lr);
}

}  // namespace plandyn
