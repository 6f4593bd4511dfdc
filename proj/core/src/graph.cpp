#include "plandyn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace plandyn {

std::size_t BoolMatrix::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

BoolMatrix reachability_closure(const BoolMatrix& adjacency) {
  const int n = adjacency.size();
  BoolMatrix reach(n);
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (adjacency(u, v)) out[static_cast<std::size_t>(u)].push_back(v);

  std::vector<char> seen(static_cast<std::size_t>(n));
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    std::fill(seen.begin(), seen.end(), 0);
    stack.assign(out[static_cast<std::size_t>(s)].begin(), out[static_cast<std::size_t>(s)].end());
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (seen[static_cast<std::size_t>(v)]) continue;
      seen[static_cast<std::size_t>(v)] = 1;
      reach.set(v, s);
      for (int w : out[static_cast<std::size_t>(v)])
        if (!seen[static_cast<std::size_t>(w)]) stack.push_back(w);
    }
  }
  return reach;
}

BoolMatrix reachability_closure(const std::vector<std::vector<int>>& adjacency) {
  const auto n = adjacency.size();
  BoolMatrix a(static_cast<int>(n));
  for (std::size_t u = 0; u < n; ++u) {
    if (adjacency[u].size() != n)
      throw std::invalid_argument("reachability_closure: adjacency matrix is not square");
    for (std::size_t v = 0; v < n; ++v) {
      const int x = adjacency[u][v];
      if (x != 0 && x != 1)
        throw std::invalid_argument("reachability_closure: adjacency entries must be 0/1");
      a.set(static_cast<int>(u), static_cast<int>(v), x == 1);
    }
  }
  return reachability_closure(a);
}

Graph::Graph(int num_nodes, std::span<const Edge> edges) : adjacency_(num_nodes) {
  if (num_nodes < 1) throw std::invalid_argument("Graph: need at least one node");
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw std::out_of_range("Graph: edge endpoint out of range");
    adjacency_.set(u, v);
  }
  reachability_ = reachability_closure(adjacency_);
  build_neighbors();
}

Graph::Graph(BoolMatrix adjacency) : adjacency_(std::move(adjacency)) {
  if (adjacency_.size() < 1) throw std::invalid_argument("Graph: need at least one node");
  reachability_ = reachability_closure(adjacency_);
  build_neighbors();
}

void Graph::build_neighbors() {
  const int n = num_nodes();
  out_.assign(static_cast<std::size_t>(n), {});
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      if (adjacency_(u, v)) out_[static_cast<std::size_t>(u)].push_back(v);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> result;
  for (int u = 0; u < num_nodes(); ++u)
    for (int v : out_neighbors(u)) result.emplace_back(u, v);
  return result;
}

bool Graph::is_acyclic() const {
  for (int t = 0; t < num_nodes(); ++t)
    if (reachability_(t, t)) return false;
  return true;
}

bool Graph::is_symmetric() const {
  for (int u = 0; u < num_nodes(); ++u)
    for (int v = 0; v < u; ++v)
      if (adjacency_(u, v) != adjacency_(v, u)) return false;
  return true;
}

void Graph::check_node(NodeId u) const {
  if (u < 0 || u >= num_nodes())
    throw std::out_of_range("node id " + std::to_string(u) + " outside [0, " +
                            std::to_string(num_nodes()) + ")");
}

bool FeasibleSet::contains(NodeId k) const {
  return std::binary_search(members.begin(), members.end(), k);
}

FeasibleSet feasible_next(const Graph& g, NodeId target, NodeId current) {
  g.check_node(target);
  g.check_node(current);
  FeasibleSet set{target, current, {}};
  for (NodeId k : g.out_neighbors(current))
    if (k == target || g.reaches(target, k)) set.members.push_back(k);
  return set;
}

Graph gen_erdos_renyi_dag(int n, double p, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("gen_erdos_renyi_dag: n must be >= 2");
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("gen_erdos_renyi_dag: p must lie in [0, 1]");
  Rng rng(seed);
  BoolMatrix a(n);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (bernoulli(rng, p)) a.set(u, v);
  return Graph(std::move(a));
}

std::vector<NodeId> oracle_plan(const Graph& g, NodeId source, NodeId target, Rng& rng,
                                std::size_t max_steps) {
  g.check_node(source);
  g.check_node(target);
  if (source == target) throw std::invalid_argument("oracle_plan: source equals target");
  if (!g.reaches(target, source))
    throw std::invalid_argument("oracle_plan: target unreachable from source");

  std::vector<NodeId> path{source};
  NodeId current = source;
  while (current != target) {
    if (path.size() > max_steps) throw std::runtime_error("oracle_plan: step limit exceeded");
    const FeasibleSet options = feasible_next(g, target, current);
    // Non-empty: current reaches target, so some successor is target or reaches it.
    current = options.members[uniform_index(rng, options.size())];
    path.push_back(current);
  }
  return path;
}

nlohmann::json graph_to_json(const Graph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
  return {{"n", g.num_nodes()}, {"edges", std::move(edges)}};
}

Graph graph_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("n") || !j.contains("edges"))
    throw std::invalid_argument("graph json: expected object with keys 'n' and 'edges'");
  const int n = j.at("n").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2)
      throw std::invalid_argument("graph json: each edge must be [u, v]");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return Graph(n, edges);
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << graph_to_json(g).dump() << '\n';
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return graph_from_json(nlohmann::json::parse(in));
}

}  // namespace plandyn
