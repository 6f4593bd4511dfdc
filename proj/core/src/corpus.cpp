#include "plandyn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace plandyn {

Sequence Sequence::from_path(std::span<const NodeId> path, int num_nodes) {
  if (path.empty()) throw std::invalid_argument("Sequence::from_path: empty path");
  Sequence seq;
  seq.tokens.reserve(path.size() + 3);
  seq.tokens.push_back(path.front());
  seq.tokens.push_back(path.back());
  seq.tokens.insert(seq.tokens.end(), path.begin(), path.end());
  seq.tokens.push_back(eos_token(num_nodes));
  return seq;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::valid: return "valid";
    case Verdict::bad_edge: return "bad-edge";
    case Verdict::wrong_terminal: return "wrong-terminal";
    case Verdict::no_eos: return "no-eos";
    case Verdict::overrun: return "overrun";
  }
  return "unknown";
}

Validation validate_sequence(const Graph& g, const Sequence& seq) {
  const auto& tok = seq.tokens;
  const int n = g.num_nodes();
  const int eos = eos_token(n);
  if (tok.size() < 4) throw std::invalid_argument("validate_sequence: fewer than 4 tokens");
  for (std::size_t p = 0; p < 3; ++p)
    if (tok[p] < 0 || tok[p] >= n)
      throw std::invalid_argument("validate_sequence: prefix must hold node ids");
  if (tok[2] != tok[0]) throw std::invalid_argument("validate_sequence: prefix is not (s, t, s)");

  const int target = tok[1];
  for (std::size_t p = 2; p < tok.size(); ++p) {
    const int cur = tok[p];
    if (cur < 0 || cur > eos) throw std::invalid_argument("validate_sequence: token out of range");
    if (cur == eos) {
      if (tok[p - 1] != target) return {Verdict::wrong_terminal, p};
      if (p + 1 != tok.size()) return {Verdict::overrun, p + 1};
      return {Verdict::valid, p};
    }
    if (p > 2 && !g.has_edge(tok[p - 1], cur)) return {Verdict::bad_edge, p};
    if (cur == target && p + 1 < tok.size() && tok[p + 1] != eos) return {Verdict::overrun, p + 1};
  }
  if (tok.back() == target) return {Verdict::no_eos, tok.size()};
  return {Verdict::overrun, tok.size()};
}

std::vector<Pair> reachable_pairs(const Graph& g) {
  std::vector<Pair> pairs;
  for (int s = 0; s < g.num_nodes(); ++s)
    for (int t = 0; t < g.num_nodes(); ++t)
      if (s != t && g.reaches(t, s)) pairs.emplace_back(s, t);
  return pairs;
}

PairSplit split_pairs(const Graph& g, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_pairs: train_fraction must lie in (0, 1)");
  auto pairs = reachable_pairs(g);
  if (pairs.empty()) throw std::invalid_argument("split_pairs: graph has no reachable pairs");

  Rng rng(seed);
  shuffle(std::span<Pair>(pairs), rng);
  const auto num_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(pairs.size())));

  PairSplit split;
  split.train.assign(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(num_train));
  split.test.assign(pairs.begin() + static_cast<std::ptrdiff_t>(num_train), pairs.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  if (split.test.empty()) split.warnings.emplace_back("test split is empty");
  if (split.train.empty()) split.warnings.emplace_back("train split is empty");
  return split;
}

std::vector<Pair> RlSplit::rl_train() const {
  std::vector<Pair> out = train2train;
  out.insert(out.end(), test2train.begin(), test2train.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Pair> RlSplit::rl_test() const {
  std::vector<Pair> out = train2test;
  out.insert(out.end(), test2test.begin(), test2test.end());
  std::sort(out.begin(), out.end());
  return out;
}

RlSplit make_rl_split(const Graph& g, double rl_train_fraction, const PairSplit& base,
                      std::uint64_t seed) {
  const PairSplit rl = split_pairs(g, rl_train_fraction, seed);
  if (base.train.size() + base.test.size() != rl.train.size() + rl.test.size())
    throw std::invalid_argument("make_rl_split: base split does not cover all reachable pairs");

  const std::set<Pair> base_train(base.train.begin(), base.train.end());
  const std::set<Pair> rl_train(rl.train.begin(), rl.train.end());
  RlSplit out;
  for (const Pair& pr : reachable_pairs(g)) {
    const bool in_train = base_train.contains(pr);
    const bool in_rl_train = rl_train.contains(pr);
    if (in_train && in_rl_train) out.train2train.push_back(pr);
    else if (in_train) out.train2test.push_back(pr);
    else if (in_rl_train) out.test2train.push_back(pr);
    else out.test2test.push_back(pr);
  }
  return out;
}

CountTensor::CountTensor(int num_nodes)
    : n_(num_nodes),
      data_(static_cast<std::size_t>(num_nodes) * num_nodes * (num_nodes + 1), 0.0) {}

double CountTensor::context_total(int target, int current) const {
  double s = 0.0;
  for (double x : row(target, current)) s += x;
  return s;
}

double CountTensor::total() const {
  double s = 0.0;
  for (double x : data_) s += x;
  return s;
}

void CountTensor::add(const Sequence& seq, double weight) {
  const auto& tok = seq.tokens;
  if (tok.size() < 3) return;
  const int target = tok[1];
  for (std::size_t p = 2; p + 1 < tok.size(); ++p) {
    if (tok[p] >= n_) break;  // nothing is predicted after EOS
    data_[index(target, tok[p], tok[p + 1])] += weight;
  }
}

CountTensor& CountTensor::operator+=(const CountTensor& other) {
  if (other.n_ != n_) throw std::invalid_argument("CountTensor: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

CountTensor count_transitions(int num_nodes, std::span<const Sequence> sequences) {
  CountTensor counts(num_nodes);
  for (const auto& s : sequences) counts.add(s);
  return counts;
}

SftDataset sample_sft_dataset(const Graph& g, std::span<const Pair> pairs, int paths_per_pair,
                              std::uint64_t seed) {
  if (paths_per_pair < 1) throw std::invalid_argument("sample_sft_dataset: K must be >= 1");
  Rng rng(seed);
  SftDataset ds;
  ds.sequences.reserve(pairs.size() * static_cast<std::size_t>(paths_per_pair));
  for (const auto& [s, t] : pairs)
    for (int k = 0; k < paths_per_pair; ++k)
      ds.sequences.push_back(Sequence::from_path(oracle_plan(g, s, t, rng), g.num_nodes()));
  ds.counts = count_transitions(g.num_nodes(), ds.sequences);
  return ds;
}

SftDataset sample_sft_dataset(const Graph& g, const PairSplit& split, int paths_per_pair,
                              std::uint64_t seed) {
  return sample_sft_dataset(g, split.train, paths_per_pair, seed);
}

SftDataset sample_sft_paths(const Graph& g, std::span<const Pair> pairs, std::size_t num_paths,
                            std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("sample_sft_paths: no pairs");
  Rng rng(seed);
  SftDataset ds;
  ds.sequences.reserve(num_paths);
  for (std::size_t i = 0; i < num_paths; ++i) {
    const auto& [s, t] = pairs[uniform_index(rng, pairs.size())];
    ds.sequences.push_back(Sequence::from_path(oracle_plan(g, s, t, rng), g.num_nodes()));
  }
  ds.counts = count_transitions(g.num_nodes(), ds.sequences);
  return ds;
}

void write_corpus(std::ostream& out, std::span<const Sequence> sequences, int num_nodes) {
  const int eos = eos_token(num_nodes);
  for (const auto& seq : sequences) {
    for (std::size_t p = 0; p < seq.tokens.size(); ++p) {
      if (p) out << ' ';
      if (seq.tokens[p] == eos) out << "</s>";
      else out << seq.tokens[p];
    }
    out << '\n';
  }
}

std::vector<Sequence> read_corpus(std::istream& in, int num_nodes) {
  std::vector<Sequence> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream words(line);
    Sequence seq;
    std::string w;
    while (words >> w) {
      if (w == "</s>") {
        seq.tokens.push_back(eos_token(num_nodes));
        continue;
      }
      std::size_t used = 0;
      int id = -1;
      try {
        id = std::stoi(w, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != w.size() || id < 0 || id >= num_nodes)
        throw std::invalid_argument("corpus line " + std::to_string(line_no) + ": bad token '" +
                                    w + "'");
      seq.tokens.push_back(id);
    }
    result.push_back(std::move(seq));
  }
  return result;
}

nlohmann::json pairs_to_json(std::span<const Pair> pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [s, t] : pairs) arr.push_back({s, t});
  return arr;
}

std::vector<Pair> pairs_from_json(const nlohmann::json& j) {
  std::vector<Pair> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("pair must be [s, t]");
    out.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return out;
}

nlohmann::json splits_to_json(const PairSplit& split, const RlSplit* rl) {
  nlohmann::json j{{"train", pairs_to_json(split.train)}, {"test", pairs_to_json(split.test)}};
  if (rl) {
    j["train2train"] = pairs_to_json(rl->train2train);
    j["train2test"] = pairs_to_json(rl->train2test);
    j["test2train"] = pairs_to_json(rl->test2train);
    j["test2test"] = pairs_to_json(rl->test2test);
  }
  return j;
}

}  // namespace plandyn
