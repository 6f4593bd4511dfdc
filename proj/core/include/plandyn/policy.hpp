#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "plandyn/corpus.hpp"
#include "plandyn/rng.hpp"

namespace plandyn {

// Stand-in for a -inf logit. exp(-1e9 - max) underflows to exactly 0, so a
// masked token is never sampled, while arithmetic on it stays finite.
inline constexpr double kMaskedLogit = -1e9;

struct DecodeConfig {
  enum class Mode { greedy, temperature };
  Mode mode = Mode::temperature;
  double tau = 1.0;

  static DecodeConfig greedy() { return {Mode::greedy, 1.0}; }
  static DecodeConfig temperature(double tau = 1.0) { return {Mode::temperature, tau}; }
  void validate() const;
};

// Gradient of a loss with respect to the logits f(i, j)[.] of the contexts it
// touches. Keyed by context index i * n + j so iteration order is stable.
class LogitGradient {
 public:
  explicit LogitGradient(int num_nodes) : n_(num_nodes) {}

  int num_nodes() const { return n_; }
  std::span<double> context(int target, int current);
  const std::map<int, std::vector<double>>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  double max_abs() const;

 private:
  int n_;
  std::map<int, std::vector<double>> rows_;
};

double max_abs_difference(const LogitGradient& a, const LogitGradient& b);

// Free logit table f(target, current) -> vocabulary scores.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(int num_nodes);

  int num_nodes() const { return n_; }
  int vocab() const { return n_ + 1; }

  std::span<const double> logits(int target, int current) const;
  std::span<double> logits(int target, int current);
  double at(int target, int current, int next) const { return logits(target, current)[static_cast<std::size_t>(next)]; }
  double& at(int target, int current, int next) { return logits(target, current)[static_cast<std::size_t>(next)]; }
  std::span<const double> data() const { return table_; }
  std::span<double> data() { return table_; }

  void apply(const LogitGradient& grad, double lr);

  friend bool operator==(const TabularPolicy&, const TabularPolicy&) = default;

 private:
  std::size_t offset(int target, int current) const;
  int n_ = 0;
  std::vector<double> table_;
};

// Target-attending linear transformer: logit(i, j, k) = W_M[j, k] + W_V[i, k].
class LinearPolicy {
 public:
  LinearPolicy() = default;
  explicit LinearPolicy(int num_nodes);

  int num_nodes() const { return n_; }
  int vocab() const { return n_ + 1; }

  double feed_forward(int current, int next) const { return w_m_[index(current, next)]; }
  double& feed_forward(int current, int next) { return w_m_[index(current, next)]; }
  double value(int target, int next) const { return w_v_[index(target, next)]; }
  double& value(int target, int next) { return w_v_[index(target, next)]; }
  std::span<const double> feed_forward_data() const { return w_m_; }
  std::span<const double> value_data() const { return w_v_; }

  void logits_into(int target, int current, std::span<double> out) const;
  void apply(const LogitGradient& grad, double lr);
  TabularPolicy to_tabular() const;

  friend bool operator==(const LinearPolicy&, const LinearPolicy&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * (n_ + 1) + static_cast<std::size_t>(col);
  }
  int n_ = 0;
  std::vector<double> w_m_;
  std::vector<double> w_v_;
};

using Model = std::variant<TabularPolicy, LinearPolicy>;

int num_nodes(const Model& m);
std::string model_kind(const Model& m);
void logits_into(const Model& m, int target, int current, std::span<double> out);
std::vector<double> logits_at(const Model& m, int target, int current);
void apply_gradient(Model& m, const LogitGradient& grad, double lr);

// Numerically stable softmax / log-softmax (max-shifted).
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);
std::vector<double> log_softmax(std::span<const double> logits);

// Greedy -> one-hot at the arg-max (lowest id on ties); temperature ->
// softmax(logits / tau). Covers the full vocabulary, EOS included.
std::vector<double> next_distribution(const Model& m, int target, int current,
                                      const DecodeConfig& decode);
// Same, restricted to node tokens (EOS excluded). Used by terminal rollouts.
std::vector<double> node_distribution(const Model& m, int target, int current,
                                      const DecodeConfig& decode);

// Autoregressive generation after the prefix (s, t, s): at most `max_len`
// tokens, stopping at EOS.
Sequence rollout(const Model& m, int source, int target, const DecodeConfig& decode,
                 std::size_t max_len, Rng& rng);

// Node-only generation that ends the episode on reaching the target (EOS is
// appended then) or after `max_len` emitted nodes. With probability
// `epsilon` each step is a uniform node instead of a policy draw.
Sequence terminal_rollout(const Model& behavior, int source, int target,
                          const DecodeConfig& decode, std::size_t max_len, double epsilon,
                          Rng& rng);

// Checkpoint: {"kind": "tabular"|"linear", "num_nodes": n, ...row-major arrays}.
nlohmann::json model_to_json(const Model& m);
Model model_from_json(const nlohmann::json& j);
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace plandyn
