#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "plandyn/analysis.hpp"

namespace plandyn {

namespace {

std::size_t effective_trials(const EvalOptions& opts) {
  if (opts.decode.mode == DecodeConfig::Mode::greedy) return 1;
  if (opts.trials < 1) throw std::invalid_argument("evaluation needs at least one trial");
  return opts.trials;
}

// Per-current next-token distributions for one target: full vocabulary for
// language style, nodes only for terminal style.
std::vector<std::vector<double>> target_distributions(const Model& m, int target, const EvalOptions& opts) {
  const int n = num_nodes(m);
  std::vector<std::vector<double>> d(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    d[static_cast<std::size_t>(j)] = opts.style == RolloutStyle::language
                                         ? next_distribution(m, target, j, opts.decode)
                                         : node_distribution(m, target, j, opts.decode);
  return d;
}

}  // namespace

Sequence eval_rollout(const Model& m, int source, int target, const EvalOptions& opts, Rng& rng) {
  if (opts.style == RolloutStyle::language) return rollout(m, source, target, opts.decode, opts.max_len, rng);
  return terminal_rollout(m, source, target, opts.decode, opts.max_len, 0.0, rng);
}

SampleStats sample_stats(const Model& m, const Graph& g, std::span<const Pair> pairs,
                         const EvalOptions& opts, Rng& rng) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs a nonempty pair set");
  const std::size_t trials = effective_trials(opts);
  std::size_t valid = 0;
  double distinct_total = 0.0;
  for (const auto& [s, t] : pairs) {
    std::set<std::vector<int>> distinct;
    for (std::size_t r = 0; r < trials; ++r) {
      Sequence seq = eval_rollout(m, s, t, opts, rng);
      if (validate_sequence(g, seq).valid()) {
        ++valid;
        distinct.insert(std::move(seq.tokens));
      }
    }
    distinct_total += static_cast<double>(distinct.size());
  }
  SampleStats st;
  st.accuracy = static_cast<double>(valid) / static_cast<double>(pairs.size() * trials);
  st.diversity = distinct_total / static_cast<double>(pairs.size());
  return st;
}

double accuracy(const Model& m, const Graph& g, std::span<const Pair> pairs, const EvalOptions& opts,
                Rng& rng) {
  return sample_stats(m, g, pairs, opts, rng).accuracy;
}

double output_diversity(const Model& m, const Graph& g, std::span<const Pair> pairs,
                        const EvalOptions& opts, Rng& rng) {
  return sample_stats(m, g, pairs, opts, rng).diversity;
}

double kl_to_uniform(const Model& m, const Graph& g, int target, int current) {
  return kl_to_uniform(logits_at(m, target, current), feasible_next(g, target, current));
}

double kl_to_uniform(std::span<const double> logits, const FeasibleSet& c) {
  if (c.empty()) throw std::invalid_argument("kl_to_uniform: empty feasible set");
  const auto lq = log_softmax(logits);
  double mx = -INFINITY;
  for (int k : c.members) mx = std::max(mx, lq[static_cast<std::size_t>(k)]);
  double z = 0.0;
  for (int k : c.members) z += std::exp(lq[static_cast<std::size_t>(k)] - mx);
  const double lse = mx + std::log(z);
  const double size = static_cast<double>(c.size());
  double mean_log = 0.0;
  for (int k : c.members) mean_log += lq[static_cast<std::size_t>(k)] - lse;
  mean_log /= size;
  return std::max(0.0, -std::log(size) - mean_log);
}

double invalid_mass(const Model& m, const Graph& g, int target, int current) {
  const FeasibleSet c = feasible_next(g, target, current);
  const auto q = softmax(logits_at(m, target, current));
  double inside = 0.0;
  for (int k : c.members) inside += q[static_cast<std::size_t>(k)];
  return std::max(0.0, 1.0 - inside);
}

std::vector<int> pair_targets(std::span<const Pair> pairs) {
  std::set<int> t;
  for (const auto& pr : pairs) t.insert(pr.second);
  return {t.begin(), t.end()};
}

FeasibilityStats feasibility_stats(const Model& m, const Graph& g, std::span<const Pair> pairs) {
  FeasibilityStats st;
  for (int i : pair_targets(pairs)) {
    for (int j = 0; j < g.num_nodes(); ++j) {
      if (j == i || !g.reaches(i, j)) continue;
      st.kl_uniform_mean += kl_to_uniform(m, g, i, j);
      st.invalid_mass_mean += invalid_mass(m, g, i, j);
      ++st.contexts;
    }
  }
  if (st.contexts) {
    st.kl_uniform_mean /= static_cast<double>(st.contexts);
    st.invalid_mass_mean /= static_cast<double>(st.contexts);
  }
  return st;
}

std::vector<double> edge_scores(const Model& m) {
  const int n = num_nodes(m);
  std::vector<double> s(static_cast<std::size_t>(n) * n, 0.0);
  if (const auto* lin = std::get_if<LinearPolicy>(&m)) {
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) s[static_cast<std::size_t>(j) * n + k] = lin->feed_forward(j, k);
    return s;
  }
  const auto& tab = std::get<TabularPolicy>(m);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      double best = -INFINITY;
      for (int i = 0; i < n; ++i)
        if (i != j) best = std::max(best, tab.at(i, j, k));
      s[static_cast<std::size_t>(j) * n + k] = n > 1 ? best : 0.0;
    }
  }
  return s;
}

double adjacency_auc(std::span<const double> scores, const Graph& g) {
  const int n = g.num_nodes();
  if (scores.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("adjacency_auc: score matrix has the wrong size");
  std::vector<std::pair<double, bool>> cells;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (j != k) cells.emplace_back(scores[static_cast<std::size_t>(j) * n + k], g.has_edge(j, k));
  std::sort(cells.begin(), cells.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Mann-Whitney U with mid-ranks for ties.
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t a = 0; a < cells.size();) {
    std::size_t b = a;
    while (b < cells.size() && cells[b].first == cells[a].first) ++b;
    const double mid = 0.5 * static_cast<double>(a + 1 + b);
    for (std::size_t c = a; c < b; ++c) {
      if (cells[c].second) {
        rank_sum += mid;
        pos += 1.0;
      } else {
        neg += 1.0;
      }
    }
    a = b;
  }
  if (pos == 0.0 || neg == 0.0)
    throw std::invalid_argument("adjacency_auc: graph needs both edges and non-edges");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double adjacency_recovery(const Model& m, const Graph& g) { return adjacency_auc(edge_scores(m), g); }

std::vector<double> success_values(const Model& m, const Graph& g, int target, const EvalOptions& opts) {
  const int n = g.num_nodes();
  if (num_nodes(m) != n) throw std::invalid_argument("success_values: model does not match graph");
  const auto dist = target_distributions(m, target, opts);
  const auto eos = static_cast<std::size_t>(eos_token(n));
  std::vector<double> v(static_cast<std::size_t>(n), 0.0), next(v.size());
  for (std::size_t h = 1; h <= opts.max_len; ++h) {
    for (int j = 0; j < n; ++j) {
      const auto& q = dist[static_cast<std::size_t>(j)];
      double acc = 0.0;
      if (opts.style == RolloutStyle::language && j == target) {
        acc = q[eos];
      } else {
        for (int k : g.out_neighbors(j)) {
          const double cont = opts.style == RolloutStyle::terminal && k == target
                                  ? 1.0
                                  : v[static_cast<std::size_t>(k)];
          acc += q[static_cast<std::size_t>(k)] * cont;
        }
      }
      next[static_cast<std::size_t>(j)] = acc;
    }
    v.swap(next);
  }
  return v;
}

double exact_accuracy(const Model& m, const Graph& g, std::span<const Pair> pairs, const EvalOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs a nonempty pair set");
  double total = 0.0;
  int cached_target = -1;
  std::vector<double> v;
  std::vector<Pair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Pair& a, const Pair& b) { return a.second < b.second; });
  for (const auto& [s, t] : sorted) {
    if (t != cached_target) {
      v = success_values(m, g, t, opts);
      cached_target = t;
    }
    total += v[static_cast<std::size_t>(s)];
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

struct PathWalker {
  const Graph& g;
  const std::vector<std::vector<double>>& dist;
  const EvalOptions& opts;
  int target;
  double trials;
  double prune;
  double expected = 0.0;

  void complete(double p) { expected += -std::expm1(trials * std::log1p(-std::min(p, 1.0))); }

  // `used` counts generated tokens so far.
  void walk(int cur, double p, std::size_t used) {
    const auto& q = dist[static_cast<std::size_t>(cur)];
    if (opts.style == RolloutStyle::language && cur == target) {
      if (used + 1 <= opts.max_len) complete(p * q[static_cast<std::size_t>(eos_token(g.num_nodes()))]);
      return;
    }
    if (used + 1 > opts.max_len) return;
    for (int k : g.out_neighbors(cur)) {
      if (k != target && !g.reaches(target, k)) continue;
      const double pk = p * q[static_cast<std::size_t>(k)];
      if (pk <= 0.0 || pk < prune) continue;
      if (opts.style == RolloutStyle::terminal && k == target) complete(pk);
      else walk(k, pk, used + 1);
    }
  }
};

}  // namespace

double expected_diversity(const Model& m, const Graph& g, std::span<const Pair> pairs,
                          const EvalOptions& opts, double prune) {
  if (pairs.empty()) throw std::invalid_argument("evaluation needs a nonempty pair set");
  const double trials = static_cast<double>(effective_trials(opts));
  double total = 0.0;
  int cached_target = -1;
  std::vector<std::vector<double>> dist;
  std::vector<Pair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const Pair& a, const Pair& b) { return a.second < b.second; });
  for (const auto& [s, t] : sorted) {
    if (t != cached_target) {
      dist = target_distributions(m, t, opts);
      cached_target = t;
    }
    PathWalker w{g, dist, opts, t, trials, prune};
    w.walk(s, 1.0, 0);
    total += w.expected;
  }
  return total / static_cast<double>(pairs.size());
}

LogitHeatmap snapshot_logits(const Model& m, const Graph& g, int current, std::span<const int> targets,
                             std::span<const int> cols) {
  g.check_node(current);
  LogitHeatmap h;
  h.current = current;
  h.rows.assign(targets.begin(), targets.end());
  h.cols.assign(cols.begin(), cols.end());
  for (int i : h.rows) {
    const auto logits = logits_at(m, i, current);
    const FeasibleSet c = feasible_next(g, i, current);
    std::vector<double> raw;
    std::vector<bool> mask;
    for (int k : h.cols) {
      raw.push_back(logits.at(static_cast<std::size_t>(k)));
      mask.push_back(i != current && c.contains(k));
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double lo_v = raw.empty() ? 0.0 : *lo;
    const double range = raw.empty() ? 0.0 : *hi - *lo;
    for (double& x : raw) x = range > 0.0 ? (x - lo_v) / range : 0.5;
    h.values.push_back(std::move(raw));
    h.feasible.push_back(std::move(mask));
  }
  return h;
}

nlohmann::json heatmap_to_json(const LogitHeatmap& h) {
  return {{"current", h.current}, {"step", h.step},          {"rows", h.rows},
          {"cols", h.cols},       {"values", h.values},      {"feasible", h.feasible}};
}

LogitHeatmap heatmap_from_json(const nlohmann::json& j) {
  LogitHeatmap h;
  h.current = j.at("current").get<int>();
  h.step = j.at("step").get<std::size_t>();
  h.rows = j.at("rows").get<std::vector<int>>();
  h.cols = j.at("cols").get<std::vector<int>>();
  h.values = j.at("values").get<std::vector<std::vector<double>>>();
  h.feasible = j.at("feasible").get<std::vector<std::vector<bool>>>();
  if (h.values.size() != h.rows.size() || h.feasible.size() != h.rows.size())
    throw std::invalid_argument("heatmap: row count mismatch");
  for (std::size_t r = 0; r < h.rows.size(); ++r)
    if (h.values[r].size() != h.cols.size() || h.feasible[r].size() != h.cols.size())
      throw std::invalid_argument("heatmap: column count mismatch");
  return h;
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string csv_header() {
  return "step,train_acc,test_acc,diversity,kl_uniform_mean,invalid_mass,adjacency_auc,extra_json";
}

std::string to_csv_row(const RunRecord& r) {
  std::string extra = r.extra.dump();
  std::string quoted = "\"";
  for (char c : extra) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  quoted += '"';
  return std::to_string(r.step) + ',' + format_number(r.train_acc) + ',' + format_number(r.test_acc) + ',' +
         format_number(r.diversity) + ',' + format_number(r.kl_uniform_mean) + ',' +
         format_number(r.invalid_mass) + ',' + format_number(r.adjacency_auc) + ',' + quoted;
}

}  // namespace plandyn
