#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "plandyn/rng.hpp"

namespace plandyn {

using NodeId = int;
using Edge = std::pair<NodeId, NodeId>;

// Square 0/1 matrix stored row-major.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  explicit BoolMatrix(int n) : n_(n), cells_(static_cast<std::size_t>(n) * n, 0) {}

  int size() const { return n_; }
  bool operator()(int row, int col) const { return cells_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { cells_[index(row, col)] = value ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * n_ + col;
  }
  int n_ = 0;
  std::vector<std::uint8_t> cells_;
};

// R[t,s] = 1 iff there is a directed path of length >= 1 from s to t in A.
// Throws std::invalid_argument for a non-square description (see overload).
BoolMatrix reachability_closure(const BoolMatrix& adjacency);
BoolMatrix reachability_closure(const std::vector<std::vector<int>>& adjacency);

// Immutable planning world: adjacency A[u,v] and its target-first reachability
// R[t,s]. Safe to share read-only between threads.
class Graph {
 public:
  Graph() = default;
  Graph(int num_nodes, std::span<const Edge> edges);
  explicit Graph(BoolMatrix adjacency);

  int num_nodes() const { return adjacency_.size(); }
  bool has_edge(NodeId from, NodeId to) const { return adjacency_(from, to); }
  // True iff `target` is reachable from `source` by a path of length >= 1.
  bool reaches(NodeId target, NodeId source) const { return reachability_(target, source); }

  const BoolMatrix& adjacency() const { return adjacency_; }
  const BoolMatrix& reachability() const { return reachability_; }
  std::span<const NodeId> out_neighbors(NodeId u) const { return out_[static_cast<std::size_t>(u)]; }

  std::vector<Edge> edges() const;
  std::size_t num_edges() const { return adjacency_.count(); }
  bool is_acyclic() const;
  bool is_symmetric() const;

  void check_node(NodeId u) const;

 private:
  void build_neighbors();

  BoolMatrix adjacency_;
  BoolMatrix reachability_;
  std::vector<std::vector<NodeId>> out_;
};

// C(target, current): successors of `current` that are the target or can reach it.
struct FeasibleSet {
  NodeId target = 0;
  NodeId current = 0;
  std::vector<NodeId> members;  // ascending

  bool contains(NodeId k) const;
  bool empty() const { return members.empty(); }
  std::size_t size() const { return members.size(); }
};

FeasibleSet feasible_next(const Graph& g, NodeId target, NodeId current);

// DAG on nodes 0..n-1: every pair u < v independently gets edge u->v with
// probability p. Pairs are drawn in (u ascending, v ascending) order, one
// uniform01 draw each.
Graph gen_erdos_renyi_dag(int n, double p, std::uint64_t seed);

// Random walk restricted to the feasible set until the target is hit.
// Returns the node path [s, ..., t]. Throws std::invalid_argument when s == t
// or t is unreachable from s; throws std::runtime_error if `max_steps` is
// exhausted (only possible on cyclic graphs).
std::vector<NodeId> oracle_plan(const Graph& g, NodeId source, NodeId target, Rng& rng,
                                std::size_t max_steps = 1'000'000);

// --- Blocksworld -----------------------------------------------------------

// Stacks listed bottom to top; the stack list is kept sorted so every
// physical arrangement has exactly one representation.
struct BlocksConfiguration {
  std::vector<std::vector<int>> stacks;

  std::string shape() const;  // stack heights, descending, e.g. "2+1+1"
  std::string to_string() const;
  friend auto operator<=>(const BlocksConfiguration&, const BlocksConfiguration&) = default;
};

struct BlocksworldWorld {
  Graph graph;
  std::vector<BlocksConfiguration> states;  // indexed by node id

  std::map<std::string, int> shape_counts() const;
};

// Legal single moves: lift the top block of any stack and put it on the
// table (when it is not already there) or on top of another stack.
std::vector<BlocksConfiguration> blocks_moves(const BlocksConfiguration& config);

// Supported block counts: 2..6. The four-block world has 73 states.
BlocksworldWorld blocksworld(int num_blocks);
Graph blocksworld_graph(int num_blocks);

// --- serialization -----------------------------------------------------------

// {"n": int, "edges": [[u, v], ...]}; reachability is recomputed on load.
nlohmann::json graph_to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);
void save_graph(const Graph& g, const std::string& path);
Graph load_graph(const std::string& path);

}  // namespace plandyn
