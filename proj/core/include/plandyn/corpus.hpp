#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "plandyn/graph.hpp"

namespace plandyn {

// Vocabulary: node ids 0..n-1 followed by the end-of-sequence token at id n.
constexpr int eos_token(int num_nodes) { return num_nodes; }
constexpr int vocab_size(int num_nodes) { return num_nodes + 1; }

// Token list in "s t s a b ... t <eos>" form.
struct Sequence {
  std::vector<int> tokens;

  int source() const { return tokens.at(0); }
  int target() const { return tokens.at(1); }
  bool complete(int num_nodes) const {
    return !tokens.empty() && tokens.back() == eos_token(num_nodes);
  }
  // Wraps a node path [s, ..., t] into "s t s ... t <eos>".
  static Sequence from_path(std::span<const NodeId> path, int num_nodes);

  friend bool operator==(const Sequence&, const Sequence&) = default;
};

enum class Verdict { valid, bad_edge, wrong_terminal, no_eos, overrun };
std::string_view to_string(Verdict v);

struct Validation {
  Verdict verdict = Verdict::valid;
  std::size_t position = 0;  // token index where the problem was detected

  bool valid() const { return verdict == Verdict::valid; }
};

// Valid iff tokens[2..] up to the first EOS form an edge-consecutive walk that
// starts at the source, first touches the target at its last node, and is
// followed by exactly one trailing EOS. Reasons:
//   bad_edge        a consecutive pair is not an edge
//   wrong_terminal  EOS emitted at a node other than the target
//   no_eos          the walk ended on the target without emitting EOS
//   overrun         generation ran past the target, or stopped early without EOS
// Throws std::invalid_argument on fewer than 4 tokens or a prefix other than
// (s, t, s).
Validation validate_sequence(const Graph& g, const Sequence& seq);

using Pair = std::pair<NodeId, NodeId>;  // (source, target)

// All (s, t) with s != t and t reachable from s, in (s, t) order.
std::vector<Pair> reachable_pairs(const Graph& g);

struct PairSplit {
  std::vector<Pair> train;
  std::vector<Pair> test;
  std::vector<std::string> warnings;
};

PairSplit split_pairs(const Graph& g, double train_fraction, std::uint64_t seed);

struct RlSplit {
  std::vector<Pair> train2train;
  std::vector<Pair> train2test;
  std::vector<Pair> test2train;
  std::vector<Pair> test2test;

  std::vector<Pair> rl_train() const;  // train2train + test2train
  std::vector<Pair> rl_test() const;   // train2test + test2test
};

// Independent partition into RL-train / RL-test intersected with `base`.
RlSplit make_rl_split(const Graph& g, double rl_train_fraction, const PairSplit& base,
                      std::uint64_t seed);

// Dense (target, current, next) tensor over nodes x nodes x vocabulary.
// Entries are integral counts held as doubles so they feed straight into the
// closed-form gradients.
class CountTensor {
 public:
  CountTensor() = default;
  explicit CountTensor(int num_nodes);

  int num_nodes() const { return n_; }
  int vocab() const { return n_ + 1; }

  double operator()(int target, int current, int next) const { return data_[index(target, current, next)]; }
  double& operator()(int target, int current, int next) { return data_[index(target, current, next)]; }
  std::span<const double> row(int target, int current) const {
    return {data_.data() + index(target, current, 0), static_cast<std::size_t>(vocab())};
  }
  double context_total(int target, int current) const;
  double total() const;
  std::span<const double> data() const { return data_; }

  // Tallies every (u2, u_m, u_{m+1}) transition for m >= 3, EOS included.
  void add(const Sequence& seq, double weight = 1.0);
  CountTensor& operator+=(const CountTensor& other);

 private:
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + static_cast<std::size_t>(j)) * (n_ + 1) +
           static_cast<std::size_t>(k);
  }
  int n_ = 0;
  std::vector<double> data_;
};

CountTensor count_transitions(int num_nodes, std::span<const Sequence> sequences);

struct SftDataset {
  std::vector<Sequence> sequences;
  CountTensor counts;
};

// K oracle-planned paths for each pair, in pair order.
SftDataset sample_sft_dataset(const Graph& g, std::span<const Pair> pairs, int paths_per_pair,
                              std::uint64_t seed);
SftDataset sample_sft_dataset(const Graph& g, const PairSplit& split, int paths_per_pair,
                              std::uint64_t seed);
// `num_paths` paths whose (s, t) is drawn uniformly from `pairs` each time.
SftDataset sample_sft_paths(const Graph& g, std::span<const Pair> pairs, std::size_t num_paths,
                            std::uint64_t seed);

// Corpus text: one sequence per line, space separated ids, EOS written as </s>.
void write_corpus(std::ostream& out, std::span<const Sequence> sequences, int num_nodes);
std::vector<Sequence> read_corpus(std::istream& in, int num_nodes);

nlohmann::json pairs_to_json(std::span<const Pair> pairs);
std::vector<Pair> pairs_from_json(const nlohmann::json& j);
nlohmann::json splits_to_json(const PairSplit& split, const RlSplit* rl);

}  // namespace plandyn
