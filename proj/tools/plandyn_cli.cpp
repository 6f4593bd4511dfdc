// plandyn command-line driver: gen-graph, train, verify, export.

#include <atomic>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "plandyn/experiment.hpp"
#include "plandyn/version.hpp"

namespace fs = std::filesystem;
using namespace plandyn;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

std::string graph_file_name(const std::vector<double>& er, int blocks, std::uint64_t seed) {
  if (blocks > 0) return "blocksworld_" + std::to_string(blocks) + ".json";
  std::ostringstream s;
  s << "er_n" << static_cast<int>(er[0]) << "_p" << er[1] << "_seed" << seed << ".json";
  return s.str();
}

int cmd_gen_graph(const std::vector<double>& er, int blocks, std::uint64_t seed,
                  const std::optional<std::string>& out, const std::string& name) {
  if (er.empty() == (blocks == 0)) {
    std::cerr << "gen-graph: give exactly one of --er N P or --blocksworld B\n";
    return kExitUsage;
  }
  Graph g;
  if (blocks > 0) {
    g = blocksworld_graph(blocks);
  } else {
    const double n = er[0];
    if (n < 2 || n != static_cast<int>(n)) throw std::invalid_argument("--er: N must be an integer >= 2");
    if (!(er[1] >= 0.0 && er[1] <= 1.0)) throw std::invalid_argument("--er: P must lie in [0, 1]");
    g = gen_erdos_renyi_dag(static_cast<int>(n), er[1], derive_seed(seed, "graph"));
  }
  const fs::path path = output_root(out, nullptr) / (name.empty() ? graph_file_name(er, blocks, seed) : name);
  write_json(path, graph_to_json(g));
  std::cout << path.string() << "  nodes=" << g.num_nodes() << " edges=" << g.num_edges() << '\n';
  return 0;
}

int cmd_train(const std::vector<std::string>& configs, const std::optional<std::uint64_t>& seed,
              const std::optional<std::string>& out, int jobs) {
  std::vector<ExperimentConfig> cfgs;
  for (const auto& path : configs) {
    ExperimentConfig c = load_config(path);
    if (seed) c.seed = *seed;
    cfgs.push_back(std::move(c));
  }

  std::mutex io;
  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cfgs.size(); k = next++) {
      const auto& c = cfgs[k];
      const fs::path dir = output_root(out, &c) / c.run_name();
      try {
        const RunResult r = run_experiment(c, dir);
        std::lock_guard lock(io);
        const RunRecord& last = r.records.back();
        std::cout << dir.string() << "  step=" << last.step << " train_acc=" << format_number(last.train_acc)
                  << " test_acc=" << format_number(last.test_acc)
                  << " diversity=" << format_number(last.diversity) << '\n';
      } catch (const std::exception& e) {
        ++failures;
        std::lock_guard lock(io);
        std::cerr << "train " << configs[k] << ": " << e.what() << '\n';
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(cfgs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return failures == 0 ? 0 : kExitFail;
}

std::vector<TheoremId> parse_ids(const std::string& list) {
  std::vector<TheoremId> ids;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) ids.push_back(theorem_from_string(tok));
  if (ids.empty()) throw std::invalid_argument("no theorem ids given");
  return ids;
}

int cmd_verify(const std::string& run, const std::string& theorems, std::uint64_t seed,
               const std::optional<std::string>& out) {
  std::vector<TheoremId> ids;
  try {
    ids = parse_ids(theorems);
  } catch (const std::invalid_argument& e) {
    std::cerr << "verify: " << e.what() << " (known: T1..T8, PPO)\n";
    return kExitUsage;
  }
  const std::optional<fs::path> dir = run.empty() ? std::nullopt : std::optional<fs::path>(run);
  const auto reports = verify_run(dir, ids, seed);

  nlohmann::json j = nlohmann::json::array();
  bool all = true;
  std::printf("%-6s %-14s %-14s %s\n", "id", "residual", "threshold", "result");
  for (const auto& r : reports) {
    std::printf("%-6s %-14.6g %-14.6g %s\n", std::string(to_string(r.id)).c_str(), r.residual, r.threshold,
                r.pass ? "PASS" : "FAIL");
    all = all && r.pass;
    j.push_back(report_to_json(r));
  }
  const fs::path dest = dir ? *dir / "verify.json" : output_root(out, nullptr) / "verify.json";
  write_json(dest, j);
  std::cout << "wrote " << dest.string() << '\n';
  return all ? 0 : kExitFail;
}

int cmd_export(const std::vector<std::string>& runs, const std::optional<std::string>& out) {
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  const fs::path dest = out ? fs::path(*out) : output_root(std::nullopt, nullptr) / "bundle";
  const auto bundle = export_bundle(dirs, dest);
  std::cout << dest.string() << "  runs=" << bundle["runs"].size()
            << (bundle["incomplete"].get<bool>() ? " (incomplete)" : "") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plandyn: planning dynamics of SFT, policy gradient and Q-learning on graphs"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  std::optional<std::string> out;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-graph", "Write a graph JSON file");
  std::vector<double> er;
  int blocks = 0;
  std::string graph_name;
  gen->add_option("--er", er, "Erdos-Renyi DAG: N P")->expected(2);
  gen->add_option("--blocksworld", blocks, "Blocksworld state graph with B blocks");
  gen->add_option("--seed", seed, "Global seed");
  gen->add_option("--out", out, "Output directory");
  gen->add_option("--name", graph_name, "File name inside the output directory");

  auto* train = app.add_subcommand("train", "Run one or more experiment configs");
  std::vector<std::string> configs;
  std::optional<std::uint64_t> train_seed;
  int jobs = 1;
  train->add_option("--config", configs, "Experiment config JSON (repeatable)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", out, "Output root (PLANDYN_OUT takes precedence)");
  train->add_option("--jobs", jobs, "Configs to run concurrently")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Check theorem residuals against a run");
  std::string run_dir;
  std::string theorems = "T1";
  verify->add_option("run", run_dir, "Run directory (optional for PPO)");
  verify->add_option("--theorems", theorems, "Comma separated ids: T1..T8, PPO");
  verify->add_option("--seed", seed, "Seed for Monte Carlo checks");
  verify->add_option("--out", out, "Where verify.json goes when no run is given");

  auto* exp = app.add_subcommand("export", "Bundle run outputs for plotting");
  std::vector<std::string> runs;
  exp->add_option("runs", runs, "Run directories")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--out", out, "Bundle directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_graph(er, blocks, seed, out, graph_name);
    if (*train) return cmd_train(configs, train_seed, out, jobs);
    if (*verify) return cmd_verify(run_dir, theorems, seed, out);
    if (*exp) return cmd_export(runs, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFail;
  }
  return kExitUsage;
}
