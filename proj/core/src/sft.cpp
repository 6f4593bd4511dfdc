#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "plandyn/trainers.hpp"

namespace plandyn {

namespace {

bool any_nonzero(std::span<const double> row) {
  for (double x : row)
    if (x != 0.0) return true;
  return false;
}

void check_shape(const Model& m, const CountTensor& c) {
  if (num_nodes(m) != c.num_nodes()) throw std::invalid_argument("count tensor does not match the model");
}

}  // namespace

void add_cross_entropy_gradient(const Model& m, const CountTensor& weights, LogitGradient& grad) {
  check_shape(m, weights);
  const int n = num_nodes(m);
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto w = weights.row(i, j);
      if (!any_nonzero(w)) continue;
      double total = 0.0;
      for (double x : w) total += x;
      logits_into(m, i, j, logits);
      const auto q = softmax(logits);
      auto g = grad.context(i, j);
      for (std::size_t k = 0; k < q.size(); ++k) g[k] += -w[k] + q[k] * total;
    }
  }
}

double sft_loss(const Model& m, const CountTensor& counts) {
  check_shape(m, counts);
  const int n = num_nodes(m);
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto c = counts.row(i, j);
      if (!any_nonzero(c)) continue;
      logits_into(m, i, j, logits);
      const auto lq = log_softmax(logits);
      for (std::size_t k = 0; k < c.size(); ++k)
        if (c[k] != 0.0) loss -= c[k] * lq[k];
    }
  }
  return loss;
}

LogitGradient sft_gradient(const Model& m, const CountTensor& counts) {
  LogitGradient g(num_nodes(m));
  add_cross_entropy_gradient(m, counts, g);
  return g;
}

double sft_step(Model& m, const CountTensor& counts, const SftConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("SftConfig: lr must be positive");
  const double loss = sft_loss(m, counts);
  apply_gradient(m, sft_gradient(m, counts), cfg.lr);
  return loss;
}

double sft_step(Model& m, std::span<const Sequence> batch, const SftConfig& cfg) {
  const int n = num_nodes(m);
  for (const auto& s : batch)
    if (s.tokens.size() < 4 || s.tokens[2] != s.tokens[0])
      throw std::invalid_argument("sft_step: malformed sequence");
  return sft_step(m, count_transitions(n, batch), cfg);
}

StablePointReport check_sft_stable_point(const Model& m, const CountTensor& counts, double tol) {
  check_shape(m, counts);
  const int n = num_nodes(m);
  StablePointReport rep;
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double total = counts.context_total(i, j);
      if (total <= 0.0) continue;
      logits_into(m, i, j, logits);
      const auto q = softmax(logits);
      const auto c = counts.row(i, j);
      for (std::size_t k = 0; k < q.size(); ++k) {
        const double r = std::abs(q[k] - c[k] / total);
        if (r > rep.residual || rep.target < 0) {
          rep.residual = r;
          rep.target = i;
          rep.current = j;
          rep.next = static_cast<int>(k);
        }
      }
    }
  }
  rep.pass = rep.residual <= tol;
  return rep;
}

void train_sft(Model& m, const CountTensor& counts, const SftConfig& cfg, const StepCallback& on_step) {
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    sft_step(m, counts, cfg);
    if (on_step) on_step(step, m);
  }
}

void train_sft(Model& m, std::span<const Sequence> corpus, const SftConfig& cfg, Rng& rng,
               const StepCallback& on_step) {
  if (cfg.batch == 0) {
    train_sft(m, count_transitions(num_nodes(m), corpus), cfg, on_step);
    return;
  }
  if (corpus.empty()) throw std::invalid_argument("train_sft: empty corpus");
  std::vector<Sequence> batch(cfg.batch);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (auto& s : batch) s = corpus[uniform_index(rng, corpus.size())];
    sft_step(m, batch, cfg);
    if (on_step) on_step(step, m);
  }
}

}  // namespace plandyn
