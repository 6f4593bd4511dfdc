#pragma once

// Reference computations written without the library's helpers, used as
// ground truth by the unit and acceptance tests. Deliberately slow and plain.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<int>>;

inline Matrix adjacency(int n, const std::vector<std::pair<int, int>>& edges) {
  Matrix a(n, std::vector<int>(n, 0));
  for (auto [u, v] : edges) a[u][v] = 1;
  return a;
}

// r[t][s] = 1 iff a path of length >= 1 leads from s to t, by DFS from every s.
inline Matrix dfs_closure(const Matrix& a) {
  const int n = static_cast<int>(a.size());
  Matrix r(n, std::vector<int>(n, 0));
  for (int s = 0; s < n; ++s) {
    std::vector<int> stack;
    std::vector<char> seen(n, 0);
    for (int v = 0; v < n; ++v)
      if (a[s][v] && !seen[v]) seen[v] = 1, stack.push_back(v);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      r[u][s] = 1;
      for (int v = 0; v < n; ++v)
        if (a[u][v] && !seen[v]) seen[v] = 1, stack.push_back(v);
    }
  }
  return r;
}

// Every simple path s -> t (s != t), as node lists.
inline std::vector<std::vector<int>> all_paths(const Matrix& a, int s, int t) {
  const int n = static_cast<int>(a.size());
  std::vector<std::vector<int>> out;
  std::vector<int> path{s};
  std::vector<char> on(n, 0);
  on[s] = 1;
  std::function<void(int)> go = [&](int u) {
    for (int v = 0; v < n; ++v) {
      if (!a[u][v] || on[v]) continue;
      path.push_back(v);
      if (v == t) {
        out.push_back(path);
      } else {
        on[v] = 1;
        go(v);
        on[v] = 0;
      }
      path.pop_back();
    }
  };
  go(s);
  return out;
}

// Walk check straight from the definition: tokens = s t s ... t EOS.
inline bool valid_tokens(const Matrix& a, const std::vector<int>& tok) {
  const int n = static_cast<int>(a.size());
  if (tok.size() < 5) return false;
  const int s = tok[0], t = tok[1];
  if (tok[2] != s || tok.back() != n) return false;
  for (std::size_t m = 2; m + 1 < tok.size(); ++m) {
    if (tok[m] == n) return false;
    if (m > 2 && tok[m] == t && m + 2 != tok.size()) return false;
  }
  if (tok[tok.size() - 2] != t) return false;
  for (std::size_t m = 2; m + 2 < tok.size(); ++m)
    if (!a[tok[m]][tok[m + 1]]) return false;
  return true;
}

inline double log_sum_exp(const std::vector<double>& x) {
  double mx = -INFINITY;
  for (double v : x) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline std::vector<double> probs(const std::vector<double>& logits) {
  const double z = log_sum_exp(logits);
  std::vector<double> q;
  for (double v : logits) q.push_back(std::exp(v - z));
  return q;
}

// Central difference of f around x[idx].
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double x0 = x;
  x = x0 + h;
  const double up = f();
  x = x0 - h;
  const double down = f();
  x = x0;
  return (up - down) / (2 * h);
}

// Probability of each valid language-style output for (s, t) under per-context
// next-token probabilities `q(target, current)` over the full vocabulary.
inline std::vector<double> valid_path_probabilities(
    const Matrix& a, int s, int t, const std::function<std::vector<double>(int, int)>& q) {
  const int n = static_cast<int>(a.size());
  std::vector<double> out;
  for (const auto& path : all_paths(a, s, t)) {
    double p = 1.0;
    for (std::size_t m = 0; m + 1 < path.size(); ++m) p *= q(t, path[m])[path[m + 1]];
    p *= q(t, t)[n];
    out.push_back(p);
  }
  return out;
}

// Brute-force AUC: every (positive, negative) comparison over off-diagonal cells.
inline double brute_auc(const std::vector<double>& scores, const Matrix& a) {
  const int n = static_cast<int>(a.size());
  std::vector<double> pos, neg;
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      if (j != k) (a[j][k] ? pos : neg).push_back(scores[j * n + k]);
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : p == q ? 0.5 : 0.0;
  return wins / (static_cast<double>(pos.size()) * neg.size());
}

inline Matrix random_dag(int n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  Matrix a(n, std::vector<int>(n, 0));
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) a[u][v] = coin(rng);
  return a;
}

}  // namespace oracle
