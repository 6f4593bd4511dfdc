#include "plandyn/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace plandyn {

void DecodeConfig::validate() const {
  if (mode == Mode::temperature && !(tau > 0.0))
    throw std::invalid_argument("DecodeConfig: tau must be positive");
}

std::span<double> LogitGradient::context(int target, int current) {
  auto [it, inserted] = rows_.try_emplace(target * n_ + current);
  if (inserted) it->second.assign(static_cast<std::size_t>(n_ + 1), 0.0);
  return it->second;
}

double LogitGradient::max_abs() const {
  double m = 0.0;
  for (const auto& [ctx, row] : rows_)
    for (double g : row) m = std::max(m, std::abs(g));
  return m;
}

double max_abs_difference(const LogitGradient& a, const LogitGradient& b) {
  double m = 0.0;
  auto scan = [&m](const LogitGradient& x, const LogitGradient& y) {
    for (const auto& [ctx, row] : x.rows()) {
      const auto it = y.rows().find(ctx);
      for (std::size_t k = 0; k < row.size(); ++k) {
        const double other = it == y.rows().end() ? 0.0 : it->second[k];
        m = std::max(m, std::abs(row[k] - other));
      }
    }
  };
  scan(a, b);
  scan(b, a);
  return m;
}

TabularPolicy::TabularPolicy(int num_nodes)
    : n_(num_nodes),
      table_(static_cast<std::size_t>(num_nodes) * num_nodes * (num_nodes + 1), 0.0) {
  if (num_nodes < 1) throw std::invalid_argument("TabularPolicy: need at least one node");
}

std::size_t TabularPolicy::offset(int target, int current) const {
  if (target < 0 || target >= n_ || current < 0 || current >= n_)
    throw std::out_of_range("TabularPolicy: context out of range");
  return (static_cast<std::size_t>(target) * n_ + static_cast<std::size_t>(current)) *
         static_cast<std::size_t>(n_ + 1);
}

std::span<const double> TabularPolicy::logits(int target, int current) const {
  return {table_.data() + offset(target, current), static_cast<std::size_t>(n_ + 1)};
}

std::span<double> TabularPolicy::logits(int target, int current) {
  return {table_.data() + offset(target, current), static_cast<std::size_t>(n_ + 1)};
}

void TabularPolicy::apply(const LogitGradient& grad, double lr) {
  if (grad.num_nodes() != n_) throw std::invalid_argument("TabularPolicy::apply: shape mismatch");
  for (const auto& [ctx, row] : grad.rows()) {
    double* f = table_.data() + static_cast<std::size_t>(ctx) * static_cast<std::size_t>(n_ + 1);
    for (std::size_t k = 0; k < row.size(); ++k) f[k] -= lr * row[k];
  }
}

LinearPolicy::LinearPolicy(int num_nodes)
    : n_(num_nodes),
      w_m_(static_cast<std::size_t>(num_nodes) * (num_nodes + 1), 0.0),
      w_v_(static_cast<std::size_t>(num_nodes) * (num_nodes + 1), 0.0) {
  if (num_nodes < 1) throw std::invalid_argument("LinearPolicy: need at least one node");
}

void LinearPolicy::logits_into(int target, int current, std::span<double> out) const {
  if (target < 0 || target >= n_ || current < 0 || current >= n_)
    throw std::out_of_range("LinearPolicy: context out of range");
  const double* m = w_m_.data() + index(current, 0);
  const double* v = w_v_.data() + index(target, 0);
  for (int k = 0; k <= n_; ++k) out[static_cast<std::size_t>(k)] = m[k] + v[k];
}

void LinearPolicy::apply(const LogitGradient& grad, double lr) {
  if (grad.num_nodes() != n_) throw std::invalid_argument("LinearPolicy::apply: shape mismatch");
  // Chain rule: dL/dW_M[j,k] = sum_i g(i,j,k), dL/dW_V[i,k] = sum_j g(i,j,k).
  for (const auto& [ctx, row] : grad.rows()) {
    const int target = ctx / n_;
    const int current = ctx % n_;
    double* m = w_m_.data() + index(current, 0);
    double* v = w_v_.data() + index(target, 0);
    for (std::size_t k = 0; k < row.size(); ++k) {
      m[k] -= lr * row[k];
      v[k] -= lr * row[k];
    }
  }
}

TabularPolicy LinearPolicy::to_tabular() const {
  TabularPolicy t(n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) logits_into(i, j, t.logits(i, j));
  return t;
}

int num_nodes(const Model& m) {
  return std::visit([](const auto& p) { return p.num_nodes(); }, m);
}

std::string model_kind(const Model& m) {
  return std::holds_alternative<TabularPolicy>(m) ? "tabular" : "linear";
}

void logits_into(const Model& m, int target, int current, std::span<double> out) {
  if (const auto* t = std::get_if<TabularPolicy>(&m)) {
    const auto row = t->logits(target, current);
    std::copy(row.begin(), row.end(), out.begin());
  } else {
    std::get<LinearPolicy>(m).logits_into(target, current, out);
  }
}

std::vector<double> logits_at(const Model& m, int target, int current) {
  std::vector<double> out(static_cast<std::size_t>(num_nodes(m) + 1));
  logits_into(m, target, current, out);
  return out;
}

void apply_gradient(Model& m, const LogitGradient& grad, double lr) {
  std::visit([&](auto& p) { p.apply(grad, lr); }, m);
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp((logits[k] - mx) / tau);
    z += p[k];
  }
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

namespace {

std::vector<double> decode_distribution(std::span<const double> logits, const DecodeConfig& decode) {
  decode.validate();
  if (decode.mode == DecodeConfig::Mode::greedy) {
    std::vector<double> p(logits.size(), 0.0);
    // max_element returns the first maximum, i.e. the lowest token id.
    p[static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin())] = 1.0;
    return p;
  }
  return softmax(logits, decode.tau);
}

int draw(std::span<const double> logits, const DecodeConfig& decode, Rng& rng) {
  if (decode.mode == DecodeConfig::Mode::greedy)
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const auto p = softmax(logits, decode.tau);
  return static_cast<int>(sample_categorical(rng, p));
}

}  // namespace

std::vector<double> next_distribution(const Model& m, int target, int current,
                                      const DecodeConfig& decode) {
  return decode_distribution(logits_at(m, target, current), decode);
}

std::vector<double> node_distribution(const Model& m, int target, int current,
                                      const DecodeConfig& decode) {
  auto logits = logits_at(m, target, current);
  logits.pop_back();
  return decode_distribution(logits, decode);
}

Sequence rollout(const Model& m, int source, int target, const DecodeConfig& decode,
                 std::size_t max_len, Rng& rng) {
  const int n = num_nodes(m);
  if (source < 0 || source >= n || target < 0 || target >= n)
    throw std::out_of_range("rollout: node id out of range");
  decode.validate();
  const int eos = eos_token(n);
  Sequence seq{{source, target, source}};
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  int current = source;
  for (std::size_t step = 0; step < max_len; ++step) {
    logits_into(m, target, current, logits);
    const int next = draw(logits, decode, rng);
    seq.tokens.push_back(next);
    if (next == eos) break;
    current = next;
  }
  return seq;
}

Sequence terminal_rollout(const Model& behavior, int source, int target,
                          const DecodeConfig& decode, std::size_t max_len, double epsilon,
                          Rng& rng) {
  const int n = num_nodes(behavior);
  if (source < 0 || source >= n || target < 0 || target >= n)
    throw std::out_of_range("terminal_rollout: node id out of range");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("terminal_rollout: epsilon must lie in [0, 1]");
  decode.validate();
  Sequence seq{{source, target, source}};
  std::vector<double> logits(static_cast<std::size_t>(n + 1));
  int current = source;
  for (std::size_t step = 0; step < max_len; ++step) {
    int next;
    if (epsilon > 0.0 && uniform01(rng) < epsilon) {
      next = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    } else {
      logits_into(behavior, target, current, logits);
      next = draw(std::span<const double>(logits).first(static_cast<std::size_t>(n)), decode, rng);
    }
    seq.tokens.push_back(next);
    if (next == target) {
      seq.tokens.push_back(eos_token(n));
      break;
    }
    current = next;
  }
  return seq;
}

nlohmann::json model_to_json(const Model& m) {
  nlohmann::json j;
  j["kind"] = model_kind(m);
  j["num_nodes"] = num_nodes(m);
  j["vocab"] = num_nodes(m) + 1;
  if (const auto* t = std::get_if<TabularPolicy>(&m)) {
    j["shape"] = {t->num_nodes(), t->num_nodes(), t->vocab()};
    j["logits"] = std::vector<double>(t->data().begin(), t->data().end());
  } else {
    const auto& l = std::get<LinearPolicy>(m);
    j["shape"] = {l.num_nodes(), l.vocab()};
    j["w_m"] = std::vector<double>(l.feed_forward_data().begin(), l.feed_forward_data().end());
    j["w_v"] = std::vector<double>(l.value_data().begin(), l.value_data().end());
  }
  return j;
}

Model model_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const int n = j.at("num_nodes").get<int>();
  auto fill = [](std::span<double> dst, const nlohmann::json& src, const char* what) {
    if (!src.is_array() || src.size() != dst.size())
      throw std::invalid_argument(std::string("checkpoint: '") + what + "' has wrong length");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i].get<double>();
  };
  if (kind == "tabular") {
    TabularPolicy t(n);
    fill(t.data(), j.at("logits"), "logits");
    return t;
  }
  if (kind == "linear") {
    LinearPolicy l(n);
    std::vector<double> wm(static_cast<std::size_t>(n) * (n + 1));
    std::vector<double> wv(wm.size());
    fill(wm, j.at("w_m"), "w_m");
    fill(wv, j.at("w_v"), "w_v");
    for (int r = 0; r < n; ++r)
      for (int c = 0; c <= n; ++c) {
        const auto idx = static_cast<std::size_t>(r) * (n + 1) + static_cast<std::size_t>(c);
        l.feed_forward(r, c) = wm[idx];
        l.value(r, c) = wv[idx];
      }
    return l;
  }
  throw std::invalid_argument("checkpoint: unknown model kind '" + kind + "'");
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(m).dump() << '\n';
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace plandyn
