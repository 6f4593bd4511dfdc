#include <algorithm>
#include <deque>
#include <set>
#include <stdexcept>
#include <string>

#include "plandyn/graph.hpp"

namespace plandyn {

namespace {

BlocksConfiguration canonical(std::vector<std::vector<int>> stacks) {
  std::erase_if(stacks, [](const auto& s) { return s.empty(); });
  std::sort(stacks.begin(), stacks.end());
  return BlocksConfiguration{std::move(stacks)};
}

}  // namespace

std::string BlocksConfiguration::shape() const {
  std::vector<std::size_t> heights;
  for (const auto& s : stacks) heights.push_back(s.size());
  std::sort(heights.rbegin(), heights.rend());
  std::string out;
  for (std::size_t h : heights) {
    if (!out.empty()) out += '+';
    out += std::to_string(h);
  }
  return out;
}

std::string BlocksConfiguration::to_string() const {
  std::string out;
  for (const auto& s : stacks) {
    out += '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += ' ';
      out += static_cast<char>('A' + s[i]);
    }
    out += ']';
  }
  return out;
}

std::vector<BlocksConfiguration> blocks_moves(const BlocksConfiguration& config) {
  std::vector<BlocksConfiguration> next;
  const auto& stacks = config.stacks;
  for (std::size_t from = 0; from < stacks.size(); ++from) {
    const int block = stacks[from].back();
    if (stacks[from].size() > 1) {
      auto moved = stacks;
      moved[from].pop_back();
      moved.push_back({block});
      next.push_back(canonical(std::move(moved)));
    }
    for (std::size_t to = 0; to < stacks.size(); ++to) {
      if (to == from) continue;
      auto moved = stacks;
      moved[from].pop_back();
      moved[to].push_back(block);
      next.push_back(canonical(std::move(moved)));
    }
  }
  std::sort(next.begin(), next.end());
  next.erase(std::unique(next.begin(), next.end()), next.end());
  return next;
}

std::map<std::string, int> BlocksworldWorld::shape_counts() const {
  std::map<std::string, int> counts;
  for (const auto& s : states) ++counts[s.shape()];
  return counts;
}

BlocksworldWorld blocksworld(int num_blocks) {
  if (num_blocks < 2 || num_blocks > 6)
    throw std::invalid_argument("blocksworld: supported block counts are 2..6, got " +
                                std::to_string(num_blocks));

  std::vector<std::vector<int>> on_table;
  for (int b = 0; b < num_blocks; ++b) on_table.push_back({b});
  const BlocksConfiguration start = canonical(on_table);

  // Every arrangement is reachable from all-on-table, so BFS enumerates them.
  std::set<BlocksConfiguration> seen{start};
  std::deque<BlocksConfiguration> frontier{start};
  while (!frontier.empty()) {
    const BlocksConfiguration cur = std::move(frontier.front());
    frontier.pop_front();
    for (auto& nxt : blocks_moves(cur))
      if (seen.insert(nxt).second) frontier.push_back(std::move(nxt));
  }

  BlocksworldWorld world;
  world.states.assign(seen.begin(), seen.end());
  const int n = static_cast<int>(world.states.size());
  BoolMatrix a(n);
  for (int u = 0; u < n; ++u) {
    for (const auto& nxt : blocks_moves(world.states[static_cast<std::size_t>(u)])) {
      const auto it = std::lower_bound(world.states.begin(), world.states.end(), nxt);
      a.set(u, static_cast<int>(it - world.states.begin()));
    }
  }
  world.graph = Graph(std::move(a));
  return world;
}

Graph blocksworld_graph(int num_blocks) { return blocksworld(num_blocks).graph; }

}  // namespace plandyn
