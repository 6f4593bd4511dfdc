#include "plandyn/theorems.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>

#include "plandyn/analysis.hpp"

namespace plandyn {

namespace {

constexpr std::pair<TheoremId, std::string_view> kNames[] = {
    {TheoremId::T1, "T1"}, {TheoremId::T2, "T2"}, {TheoremId::T3, "T3"},
    {TheoremId::T4, "T4"}, {TheoremId::T5, "T5"}, {TheoremId::T6, "T6"},
    {TheoremId::T7, "T7"}, {TheoremId::T8, "T8"}, {TheoremId::PPO, "PPO"}};

template <typename T>
const T& need(const T* p, const char* what, TheoremId id) {
  if (!p)
    throw std::invalid_argument(std::string(to_string(id)) + ": bundle is missing '" + what + "'");
  return *p;
}

void need_pairs(const TheoremBundle& b, TheoremId id) {
  if (b.pairs.empty())
    throw std::invalid_argument(std::string(to_string(id)) + ": bundle is missing 'pairs'");
}

// Feasible tokens of context (i, j): C(i, j) for j != i, EOS alone at j == i.
std::vector<bool> feasible_tokens(const Graph& g, int target, int current) {
  const int n = g.num_nodes();
  std::vector<bool> ok(static_cast<std::size_t>(n + 1), false);
  if (current == target) {
    ok[static_cast<std::size_t>(n)] = true;
  } else {
    for (int k : feasible_next(g, target, current).members) ok[static_cast<std::size_t>(k)] = true;
  }
  return ok;
}

double max_param_difference(const Model& a, const Model& b) {
  double d = 0.0;
  auto cmp = [&d](std::span<const double> x, std::span<const double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) d = std::max(d, std::abs(x[k] - y[k]));
  };
  if (const auto* ta = std::get_if<TabularPolicy>(&a)) {
    cmp(ta->data(), std::get<TabularPolicy>(b).data());
  } else {
    const auto& la = std::get<LinearPolicy>(a);
    const auto& lb = std::get<LinearPolicy>(b);
    cmp(la.feed_forward_data(), lb.feed_forward_data());
    cmp(la.value_data(), lb.value_data());
  }
  return d;
}

double params_delta_difference(const Model& start, const Model& x, const Model& y) {
  // (x - start) - (y - start) evaluated parameter-wise.
  double d = 0.0;
  auto cmp = [&d](std::span<const double> s, std::span<const double> a, std::span<const double> b) {
    for (std::size_t k = 0; k < s.size(); ++k) d = std::max(d, std::abs((a[k] - s[k]) - (b[k] - s[k])));
  };
  if (const auto* ts = std::get_if<TabularPolicy>(&start)) {
    cmp(ts->data(), std::get<TabularPolicy>(x).data(), std::get<TabularPolicy>(y).data());
  } else {
    const auto& ls = std::get<LinearPolicy>(start);
    const auto& lx = std::get<LinearPolicy>(x);
    const auto& ly = std::get<LinearPolicy>(y);
    cmp(ls.feed_forward_data(), lx.feed_forward_data(), ly.feed_forward_data());
    cmp(ls.value_data(), lx.value_data(), ly.value_data());
  }
  return d;
}

nlohmann::json context_json(int i, int j, int k = -1) {
  nlohmann::json c{{"target", i}, {"current", j}};
  if (k >= 0) c["next"] = k;
  return c;
}

TheoremReport t1(const TheoremBundle& b, double thr) {
  const auto& m = need(b.model, "model", TheoremId::T1);
  const auto& c = need(b.counts, "counts", TheoremId::T1);
  const auto rep = check_sft_stable_point(m, c, thr);
  TheoremReport r{TheoremId::T1, rep.residual, thr, false, {}};
  if (rep.target >= 0) r.details["worst"] = context_json(rep.target, rep.current, rep.next);
  return r;
}

TheoremReport t2(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T2);
  const auto& m = need(b.model, "model", TheoremId::T2);
  need_pairs(b, TheoremId::T2);
  PgConfig cfg = b.pg;
  cfg.r = 1.0;
  cfg.p = 0.0;
  cfg.lambda = 0.0;
  Rng rng(derive_seed(b.seed, "verify/T2"));
  double worst = 0.0;
  std::size_t valid = 0, total = 0;
  for (std::size_t batch = 0; batch < b.batches; ++batch) {
    const auto rollouts = sample_rollouts(m, b.pairs, cfg.rollouts_per_step, cfg.decode, cfg.max_len, rng);
    const double pg = pg_loss(m, count_rollouts(rollouts, g), cfg, nullptr);
    std::vector<Sequence> ok;
    for (const auto& s : rollouts)
      if (validate_sequence(g, s).valid()) ok.push_back(s);
    valid += ok.size();
    total += rollouts.size();
    const double sft = sft_loss(m, count_transitions(g.num_nodes(), ok));
    worst = std::max(worst, std::abs(pg - sft));
  }
  TheoremReport r{TheoremId::T2, worst, thr, false, {}};
  r.details = {{"batches", b.batches}, {"rollouts", total}, {"valid_rollouts", valid}};
  return r;
}

TheoremReport t3(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T3);
  const auto& m = need(b.model, "model", TheoremId::T3);
  need_pairs(b, TheoremId::T3);
  PgConfig cfg = b.pg;
  cfg.r = 1.0;
  cfg.p = 0.0;
  cfg.lambda = 0.0;
  Rng rng(derive_seed(b.seed, "verify/T3"));
  const int n = g.num_nodes();
  double worst_sum = 0.0, worst_negative = 0.0;
  std::size_t strict_violations = 0, contexts = 0, infeasible_checked = 0;
  nlohmann::json offender;
  for (std::size_t batch = 0; batch < b.batches; ++batch) {
    const auto rollouts = sample_rollouts(m, b.pairs, cfg.rollouts_per_step, cfg.decode, cfg.max_len, rng);
    const auto counts = count_rollouts(rollouts, g);
    const auto grad = pg_gradient(m, counts, cfg, nullptr);
    for (const auto& [ctx, row] : grad.rows()) {
      const int i = ctx / n, j = ctx % n;
      ++contexts;
      double sum = 0.0;
      for (double x : row) sum += x;
      worst_sum = std::max(worst_sum, std::abs(sum));
      const bool has_valid = counts.correct.context_total(i, j) > 0.0;
      const auto ok = feasible_tokens(g, i, j);
      for (int k = 0; k <= n; ++k) {
        if (ok[static_cast<std::size_t>(k)]) continue;
        ++infeasible_checked;
        const double gk = row[static_cast<std::size_t>(k)];
        if (-gk > worst_negative) {
          worst_negative = -gk;
          offender = context_json(i, j, k);
        }
        if (has_valid && !(gk > 0.0)) {
          ++strict_violations;
          offender = context_json(i, j, k);
        }
      }
    }
  }
  TheoremReport r{TheoremId::T3, std::max({worst_sum, worst_negative, strict_violations ? 1.0 : 0.0}), thr,
                  false, {}};
  r.details = {{"max_abs_context_sum", worst_sum},
               {"max_negative_infeasible_gradient", worst_negative},
               {"strict_violations", strict_violations},
               {"contexts", contexts},
               {"infeasible_entries", infeasible_checked}};
  if (!offender.is_null()) r.details["worst"] = offender;
  return r;
}

TheoremReport t4(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T4);
  const auto& m = need(b.model, "model", TheoremId::T4);
  const int n = g.num_nodes();
  int ti = b.context_target, tj = b.context_current;
  if (ti < 0 || tj < 0) {
    need_pairs(b, TheoremId::T4);
    for (const auto& [s, t] : b.pairs) {
      if (feasible_next(g, t, s).size() >= 2) {
        ti = t;
        tj = s;
        break;
      }
    }
    if (ti < 0) throw std::invalid_argument("T4: no context with at least two feasible tokens");
  }
  if (feasible_next(g, ti, tj).size() < 2) throw std::invalid_argument("T4: context needs |C| >= 2");

  const auto f = logits_at(m, ti, tj);
  const double pre = kl_to_uniform(m, g, ti, tj);
  const FeasibleSet feasible = feasible_next(g, ti, tj);
  const auto q = softmax(f);
  std::vector<double> updated(f.size());
  Rng rng(derive_seed(b.seed, "verify/T4"));
  double sum = 0.0, sum_sq = 0.0;
  std::vector<double> counts(static_cast<std::size_t>(n + 1));
  for (std::size_t sim = 0; sim < b.simulations; ++sim) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t r = 0; r < b.pg.rollouts_per_step; ++r) {
      const Sequence seq = rollout(m, tj, ti, b.pg.decode, b.pg.max_len, rng);
      if (!validate_sequence(g, seq).valid()) continue;
      for (std::size_t p = 2; p + 1 < seq.tokens.size(); ++p)
        if (seq.tokens[p] == tj) counts[static_cast<std::size_t>(seq.tokens[p + 1])] += b.pg.r;
    }
    double total = 0.0;
    for (double c : counts) total += c;
    for (std::size_t k = 0; k < f.size(); ++k) updated[k] = f[k] - b.pg.lr * (-counts[k] + q[k] * total);
    const double kl = kl_to_uniform(updated, feasible);
    sum += kl;
    sum_sq += kl * kl;
  }
  const double sims = static_cast<double>(b.simulations);
  const double mean = sum / sims;
  const double var = std::max(0.0, sum_sq / sims - mean * mean) * sims / std::max(1.0, sims - 1.0);
  const double se = std::sqrt(var / sims);
  double max_invalid = kMaskedLogit;
  const auto ok = feasible_tokens(g, ti, tj);
  for (int k = 0; k <= n; ++k)
    if (!ok[static_cast<std::size_t>(k)]) max_invalid = std::max(max_invalid, f[static_cast<std::size_t>(k)]);
  TheoremReport r{TheoremId::T4, pre - mean - 3.0 * se, thr, false, {}};
  r.details = {{"context", context_json(ti, tj)},
               {"feasible_size", feasible.size()},
               {"kl_before", pre},
               {"kl_after_mean", mean},
               {"kl_after_stderr", se},
               {"simulations", b.simulations},
               {"max_infeasible_logit", max_invalid}};
  return r;
}

TheoremReport t5(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T5);
  const auto& m = need(b.model, "model", TheoremId::T5);
  const auto& base = need(b.base, "base", TheoremId::T5);
  need_pairs(b, TheoremId::T5);
  const int n = g.num_nodes();
  const double lambda = b.pg.lambda;
  EvalOptions opts;
  opts.decode = DecodeConfig::temperature(1.0);
  opts.max_len = b.pg.max_len;

  std::map<int, std::vector<int>> sources;
  for (const auto& [s, t] : b.pairs) sources[t].push_back(s);

  double worst = 0.0;
  std::size_t contexts = 0;
  nlohmann::json offender;
  for (const auto& [i, srcs] : sources) {
    const auto v = success_values(m, g, i, opts);
    std::vector<std::vector<double>> q(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) q[static_cast<std::size_t>(j)] = softmax(logits_at(m, i, j));

    // Expected visits per rollout of each current node.
    std::vector<double> mass(static_cast<std::size_t>(n), 0.0), next(mass.size()), occ(mass.size(), 0.0);
    for (int s : srcs) mass[static_cast<std::size_t>(s)] += 1.0 / static_cast<double>(srcs.size());
    for (std::size_t h = 0; h < opts.max_len; ++h) {
      std::fill(next.begin(), next.end(), 0.0);
      for (int j = 0; j < n; ++j) {
        const double mj = mass[static_cast<std::size_t>(j)];
        if (mj == 0.0) continue;
        occ[static_cast<std::size_t>(j)] += mj;
        for (int k = 0; k < n; ++k) next[static_cast<std::size_t>(k)] += mj * q[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
      }
      mass.swap(next);
    }

    for (int j = 0; j < n; ++j) {
      if (occ[static_cast<std::size_t>(j)] < b.min_visits) continue;
      const auto& qj = q[static_cast<std::size_t>(j)];
      const auto lq = log_softmax(logits_at(m, i, j));
      const auto lb = log_softmax(logits_at(base, i, j));
      double lo = INFINITY, hi = -INFINITY;
      int supported = 0;
      for (int k = 0; k <= n; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        if (qj[kk] < b.min_prob) continue;
        double p;
        if (k == n) p = j == i ? 1.0 : 0.0;
        else p = g.has_edge(j, k) ? v[kk] : 0.0;
        const double balance = p - lambda * (lq[kk] - lb[kk]);
        lo = std::min(lo, balance);
        hi = std::max(hi, balance);
        ++supported;
      }
      if (supported == 0) continue;
      ++contexts;
      if (hi - lo > worst) {
        worst = hi - lo;
        offender = context_json(i, j);
      }
    }
  }
  TheoremReport r{TheoremId::T5, worst, thr, false, {}};
  r.details = {{"lambda", lambda}, {"contexts", contexts}, {"min_visits", b.min_visits}, {"min_prob", b.min_prob}};
  if (!offender.is_null()) r.details["worst"] = offender;
  return r;
}

TheoremReport t6(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T6);
  const auto& m = need(b.model, "model", TheoremId::T6);
  need_pairs(b, TheoremId::T6);
  const int n = g.num_nodes();
  double worst = 0.0;
  int worst_target = -1;
  nlohmann::json per_target = nlohmann::json::object();
  for (int i : pair_targets(b.pairs)) {
    double lo = INFINITY, hi = -INFINITY;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto f = logits_at(m, i, j);
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        lo = std::min(lo, f[static_cast<std::size_t>(k)]);
        hi = std::max(hi, f[static_cast<std::size_t>(k)]);
      }
    }
    const double spread = hi > lo ? hi - lo : 0.0;
    per_target[std::to_string(i)] = spread;
    if (spread > worst || worst_target < 0) {
      worst = std::max(worst, spread);
      worst_target = i;
    }
  }
  TheoremReport r{TheoremId::T6, worst, thr, false, {}};
  r.details = {{"worst_target", worst_target}, {"spread_by_target", per_target}};
  return r;
}

TheoremReport t7(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T7);
  const auto& m = need(b.model, "model", TheoremId::T7);
  need_pairs(b, TheoremId::T7);
  const int n = g.num_nodes();
  double worst = 0.0;
  nlohmann::json offender;
  std::size_t coords = 0;
  for (int i : pair_targets(b.pairs)) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto f = logits_at(m, i, j);
      for (int k = 0; k < n; ++k) {
        const double e = std::abs(f[static_cast<std::size_t>(k)] - q_fixed_point(g, i, j, k));
        ++coords;
        if (e > worst) {
          worst = e;
          offender = context_json(i, j, k);
        }
      }
    }
  }
  TheoremReport r{TheoremId::T7, worst, thr, false, {}};
  r.details = {{"coordinates", coords}};
  if (!offender.is_null()) r.details["worst"] = offender;
  if (b.contraction) r.details["contraction"] = b.contraction->details();
  return r;
}

TheoremReport t8(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::T8);
  const auto& m = need(b.model, "model", TheoremId::T8);
  need_pairs(b, TheoremId::T8);
  const auto* lin = std::get_if<LinearPolicy>(&m);
  if (!lin) throw std::invalid_argument("T8: needs a linear model");
  const int n = g.num_nodes();
  double fit = 0.0;
  nlohmann::json offender;
  for (int i : pair_targets(b.pairs)) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        const double want = (g.has_edge(j, k) ? 1.0 : 0.0) + (g.reaches(i, k) ? 1.0 : 0.0) - 1.0;
        const double e = std::abs(lin->feed_forward(j, k) + lin->value(i, k) - want);
        if (e > fit) {
          fit = e;
          offender = context_json(i, j, k);
        }
      }
    }
  }
  // W_M[., k] - (A[., k] - 1) should be one constant c_k per column.
  double column_spread = 0.0;
  int worst_column = -1;
  std::vector<double> gauge(static_cast<std::size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (int j = 0; j < n; ++j) {
      const double c = lin->feed_forward(j, k) - ((g.has_edge(j, k) ? 1.0 : 0.0) - 1.0);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    gauge[static_cast<std::size_t>(k)] = 0.5 * (lo + hi);
    if (hi - lo > column_spread) {
      column_spread = hi - lo;
      worst_column = k;
    }
  }
  TheoremReport r{TheoremId::T8, std::max(fit, column_spread), thr, false, {}};
  r.details = {{"fixed_point_error", fit}, {"column_spread", column_spread},
               {"worst_column", worst_column}, {"gauge", gauge}};
  if (!offender.is_null()) r.details["worst"] = offender;
  return r;
}

TheoremReport ppo(const TheoremBundle& b, double thr) {
  const auto& g = need(b.graph, "graph", TheoremId::PPO);
  const auto& m = need(b.model, "model", TheoremId::PPO);
  need_pairs(b, TheoremId::PPO);
  PgConfig cfg = b.pg;
  cfg.lambda = 0.0;
  Rng rng(derive_seed(b.seed, "verify/PPO"));
  double worst = 0.0, largest_step = 0.0;
  for (std::size_t batch = 0; batch < b.batches; ++batch) {
    const auto rollouts = sample_rollouts(m, b.pairs, cfg.rollouts_per_step, cfg.decode, cfg.max_len, rng);
    const auto counts = count_rollouts(rollouts, g);
    Model via_pg = m;
    pg_update(via_pg, nullptr, counts, cfg);
    Model via_ppo = m;
    ppo_unclipped_step(via_ppo, counts, snapshot_behavior_probs(m, counts), cfg);
    worst = std::max(worst, params_delta_difference(m, via_pg, via_ppo));
    largest_step = std::max(largest_step, max_param_difference(m, via_pg));
  }
  TheoremReport r{TheoremId::PPO, worst, thr, false, {}};
  r.details = {{"batches", b.batches}, {"largest_parameter_step", largest_step}};
  return r;
}

}  // namespace

std::string_view to_string(TheoremId id) {
  for (const auto& [k, name] : kNames)
    if (k == id) return name;
  return "?";
}

TheoremId theorem_from_string(std::string_view s) {
  for (const auto& [k, name] : kNames)
    if (name == s) return k;
  throw std::invalid_argument("unknown theorem id '" + std::string(s) + "'");
}

double default_threshold(TheoremId id) {
  switch (id) {
    case TheoremId::T1: return 1e-3;
    case TheoremId::T2: return 1e-12;
    case TheoremId::T3: return 1e-9;
    case TheoremId::T4: return 0.0;
    case TheoremId::T5: return 0.1;
    case TheoremId::T6: return 0.05;
    case TheoremId::T7: return 0.02;
    case TheoremId::T8: return 0.05;
    case TheoremId::PPO: return 1e-9;
  }
  return 0.0;
}

nlohmann::json report_to_json(const TheoremReport& r) {
  return {{"theorem", to_string(r.id)}, {"residual", r.residual}, {"threshold", r.threshold},
          {"pass", r.pass}, {"details", r.details}};
}

double q_fixed_point(const Graph& g, int target, int current, int next) {
  const double a = g.has_edge(current, next) ? 1.0 : 0.0;
  if (next == target) return a;
  return a + (g.reaches(target, next) ? 1.0 : 0.0) - 1.0;
}

ContractionTracker::ContractionTracker(const Graph& g, double lr, double min_error, double dominance)
    : g_(g), lr_(lr), min_error_(min_error), dominance_(dominance) {}

double ContractionTracker::bound() const { return std::abs(1.0 - 2.0 * lr_); }

void ContractionTracker::before(const Model& m, const Sequence& trajectory) {
  pending_.clear();
  std::map<std::tuple<int, int, int>, int> mult;
  for (const auto& tr : q_transitions(g_, trajectory, RewardMode::process))
    ++mult[{tr.target, tr.current, tr.next}];
  for (const auto& [key, count] : mult) {
    const auto [i, j, k] = key;
    const double e = logits_at(m, i, j)[static_cast<std::size_t>(k)] - q_fixed_point(g_, i, j, k);
    // Bootstrap error: max_k' f(i,k)[k'] against its fixed-point value R[i,k].
    const double boot_err = k == i ? 0.0 : q_bootstrap(m, i, k) - (g_.reaches(i, k) ? 1.0 : 0.0);
    if (std::abs(e) < min_error_ || std::abs(e) < dominance_ * std::abs(boot_err)) continue;
    pending_.push_back({i, j, k, count, e});
  }
}

void ContractionTracker::after(const Model& m) {
  for (const auto& p : pending_) {
    const double e = logits_at(m, p.target, p.current)[static_cast<std::size_t>(p.next)] -
                     q_fixed_point(g_, p.target, p.current, p.next);
    const double ratio = std::pow(std::abs(e) / std::abs(p.error), 1.0 / p.multiplicity);
    max_ratio_ = std::max(max_ratio_, ratio);
    ++samples_;
  }
  pending_.clear();
}

QHooks ContractionTracker::hooks() {
  QHooks h;
  h.before = [this](std::size_t, const Model& m, const Sequence& traj) { before(m, traj); };
  h.after = [this](std::size_t, const Model& m, const Sequence&) { after(m); };
  return h;
}

nlohmann::json ContractionTracker::details() const {
  return {{"max_ratio", max_ratio_}, {"bound", bound()}, {"samples", samples_}};
}

TheoremReport verify_theorem(TheoremId id, const TheoremBundle& bundle) {
  const double thr = bundle.threshold.value_or(default_threshold(id));
  TheoremReport r;
  switch (id) {
    case TheoremId::T1: r = t1(bundle, thr); break;
    case TheoremId::T2: r = t2(bundle, thr); break;
    case TheoremId::T3: r = t3(bundle, thr); break;
    case TheoremId::T4: r = t4(bundle, thr); break;
    case TheoremId::T5: r = t5(bundle, thr); break;
    case TheoremId::T6: r = t6(bundle, thr); break;
    case TheoremId::T7: r = t7(bundle, thr); break;
    case TheoremId::T8: r = t8(bundle, thr); break;
    case TheoremId::PPO: r = ppo(bundle, thr); break;
  }
  r.pass = r.residual <= r.threshold;
  return r;
}

}  // namespace plandyn
