#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plandyn/analysis.hpp"
#include "plandyn/corpus.hpp"
#include "plandyn/graph.hpp"
#include "plandyn/policy.hpp"
#include "plandyn/theorems.hpp"
#include "plandyn/trainers.hpp"

namespace plandyn {

// Raised for schema violations; `key` is the dotted path of the culprit.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct GraphSpec {
  std::string kind = "er_dag";  // er_dag | blocksworld
  int n = 30;
  double p = 0.2;
  int blocks = 4;
};

struct EvalSpec {
  std::size_t every = 200;
  std::size_t trials = 100;
  double tau = 1.0;
  std::string decode = "auto";  // auto | greedy | temperature
  std::size_t max_pairs = 0;    // 0 evaluates every pair
  int heatmap_current = 0;
  int heatmap_size = 21;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string name;
  GraphSpec graph;
  double train_fraction = 0.2;
  std::optional<double> rl_train_fraction;
  std::string model = "tabular";  // tabular | linear
  int paths_per_pair = 10;
  std::size_t num_paths = 0;      // > 0 samples this many paths over random train pairs instead
  SftConfig sft;
  std::string stage = "sft";      // sft | pg | q
  std::string base_model;         // checkpoint file or run directory
  std::string q_init = "base";    // base | zero
  PgConfig pg;
  QConfig q;
  EvalSpec eval;
  std::string out;

  std::string run_name() const;
};

// Unknown keys, wrong types and out-of-range values raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// PLANDYN_OUT, then the --out flag, then the config's "out", then "runs".
std::filesystem::path output_root(const std::optional<std::string>& cli_out, const ExperimentConfig* cfg);

// Everything a run derives from (config, seed) before training.
struct World {
  Graph graph;
  PairSplit split;
  std::optional<RlSplit> rl;

  std::vector<Pair> stage_train(const ExperimentConfig& cfg) const;
  std::vector<Pair> stage_test(const ExperimentConfig& cfg) const;
};

World build_world(const ExperimentConfig& cfg);
Model make_model(const std::string& kind, int num_nodes);
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

struct RunResult {
  std::filesystem::path dir;
  std::vector<RunRecord> records;
};

// Trains one stage into `run_dir`, which is created. Layout:
//   manifest.json config.json graph.json splits.json [corpus.txt]
//   metrics.csv checkpoints/step_XXXXXXXX.json checkpoints/final.json
//   heatmaps/step_XXXXXXXX.json
RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// Theorem checks against a finished run. Without a run directory only PPO
// (which runs on a built-in small world) is available.
std::vector<TheoremReport> verify_run(const std::optional<std::filesystem::path>& run_dir,
                                      const std::vector<TheoremId>& ids, std::uint64_t seed);

// Copies run outputs into a stable layout:
//   bundle.json metrics.csv runs/<name>/{manifest.json,metrics.csv,heatmaps/*.json}
// bundle.json carries "incomplete": true when any run has not finished.
nlohmann::json export_bundle(const std::vector<std::filesystem::path>& run_dirs,
                             const std::filesystem::path& out_dir);
// Schema problems of an exported bundle; empty when it is well formed.
std::vector<std::string> lint_bundle(const std::filesystem::path& dir);

// Run-directory helpers.
std::string utc_timestamp();
std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& p);
void write_json(const std::filesystem::path& p, const nlohmann::json& j);

}  // namespace plandyn
