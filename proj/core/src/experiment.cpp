#include "plandyn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "plandyn/version.hpp"

namespace plandyn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

std::string join(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(join(where, key), "has the wrong type");
  }
}

void read_size(const json& j, const std::string& where, const char* key, std::size_t& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(join(where, key), "expected a nonnegative integer");
  out = v.get<std::size_t>();
}

DecodeConfig read_decode(const json& j, const std::string& where, DecodeConfig d) {
  std::string mode = d.mode == DecodeConfig::Mode::greedy ? "greedy" : "temperature";
  read(j, where, "decode", mode);
  read(j, where, "tau", d.tau);
  if (mode == "greedy") d.mode = DecodeConfig::Mode::greedy;
  else if (mode == "temperature") d.mode = DecodeConfig::Mode::temperature;
  else throw ConfigError(join(where, "decode"), "expected 'greedy' or 'temperature'");
  if (!(d.tau > 0.0)) throw ConfigError(join(where, "tau"), "must be positive");
  return d;
}

json decode_json(const DecodeConfig& d) {
  return {{"decode", d.mode == DecodeConfig::Mode::greedy ? "greedy" : "temperature"}, {"tau", d.tau}};
}

void require_fraction(double x, const std::string& key) {
  if (!(x > 0.0 && x < 1.0)) throw ConfigError(key, "must lie strictly between 0 and 1");
}

}  // namespace

std::string ExperimentConfig::run_name() const {
  return name.empty() ? stage + "_seed" + std::to_string(seed) : name;
}

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "", {"seed", "name", "graph", "split", "model", "sft", "stage", "base_model", "pg", "q",
                     "eval", "out"});
  ExperimentConfig c;
  if (!j.contains("seed")) throw ConfigError("seed", "is required");
  if (!j.at("seed").is_number_integer() || j.at("seed").get<long long>() < 0)
    throw ConfigError("seed", "expected a nonnegative integer");
  c.seed = j.at("seed").get<std::uint64_t>();
  read(j, "", "name", c.name);
  read(j, "", "model", c.model);
  if (c.model != "tabular" && c.model != "linear") throw ConfigError("model", "expected 'tabular' or 'linear'");
  read(j, "", "stage", c.stage);
  if (c.stage != "sft" && c.stage != "pg" && c.stage != "q")
    throw ConfigError("stage", "expected 'sft', 'pg' or 'q'");
  read(j, "", "base_model", c.base_model);
  read(j, "", "out", c.out);

  if (j.contains("graph")) {
    const auto& g = j.at("graph");
    check_keys(g, "graph", {"kind", "n", "p", "blocks"});
    read(g, "graph", "kind", c.graph.kind);
    read(g, "graph", "n", c.graph.n);
    read(g, "graph", "p", c.graph.p);
    read(g, "graph", "blocks", c.graph.blocks);
    if (c.graph.kind == "er_dag") {
      if (c.graph.n < 2) throw ConfigError("graph.n", "must be at least 2");
      if (!(c.graph.p >= 0.0 && c.graph.p <= 1.0)) throw ConfigError("graph.p", "must lie in [0, 1]");
    } else if (c.graph.kind == "blocksworld") {
      if (c.graph.blocks < 2 || c.graph.blocks > 6) throw ConfigError("graph.blocks", "supported range is 2..6");
    } else {
      throw ConfigError("graph.kind", "expected 'er_dag' or 'blocksworld'");
    }
  }

  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, "split", {"train_fraction", "rl_train_fraction"});
    read(s, "split", "train_fraction", c.train_fraction);
    if (s.contains("rl_train_fraction")) {
      double f = 0.0;
      read(s, "split", "rl_train_fraction", f);
      require_fraction(f, "split.rl_train_fraction");
      c.rl_train_fraction = f;
    }
  }
  require_fraction(c.train_fraction, "split.train_fraction");

  if (j.contains("sft")) {
    const auto& s = j.at("sft");
    check_keys(s, "sft", {"paths_per_pair", "num_paths", "steps", "lr", "batch"});
    read(s, "sft", "paths_per_pair", c.paths_per_pair);
    read_size(s, "sft", "num_paths", c.num_paths);
    read_size(s, "sft", "steps", c.sft.steps);
    read(s, "sft", "lr", c.sft.lr);
    read_size(s, "sft", "batch", c.sft.batch);
  }
  if (c.paths_per_pair < 1) throw ConfigError("sft.paths_per_pair", "must be at least 1");
  if (!(c.sft.lr > 0.0)) throw ConfigError("sft.lr", "must be positive");

  if (j.contains("pg")) {
    const auto& p = j.at("pg");
    check_keys(p, "pg", {"r", "p", "lambda", "lr", "rollouts_per_step", "steps", "max_len", "decode", "tau"});
    read(p, "pg", "r", c.pg.r);
    read(p, "pg", "p", c.pg.p);
    read(p, "pg", "lambda", c.pg.lambda);
    read(p, "pg", "lr", c.pg.lr);
    read_size(p, "pg", "rollouts_per_step", c.pg.rollouts_per_step);
    read_size(p, "pg", "steps", c.pg.steps);
    read_size(p, "pg", "max_len", c.pg.max_len);
    c.pg.decode = read_decode(p, "pg", c.pg.decode);
  }
  if (c.pg.lambda < 0.0) throw ConfigError("pg.lambda", "must be nonnegative");
  if (!(c.pg.lr > 0.0)) throw ConfigError("pg.lr", "must be positive");
  if (c.pg.rollouts_per_step < 1) throw ConfigError("pg.rollouts_per_step", "must be at least 1");
  if (c.pg.max_len < 1) throw ConfigError("pg.max_len", "must be at least 1");

  if (j.contains("q")) {
    const auto& q = j.at("q");
    check_keys(q, "q", {"reward_mode", "epsilon", "behavior", "lr", "steps", "max_len", "decode", "tau", "init"});
    std::string mode{to_string(c.q.reward_mode)}, behavior{to_string(c.q.behavior)};
    read(q, "q", "reward_mode", mode);
    read(q, "q", "behavior", behavior);
    try {
      c.q.reward_mode = reward_mode_from_string(mode);
    } catch (const std::invalid_argument&) {
      throw ConfigError("q.reward_mode", "expected 'outcome' or 'process'");
    }
    try {
      c.q.behavior = behavior_from_string(behavior);
    } catch (const std::invalid_argument&) {
      throw ConfigError("q.behavior", "expected 'on_policy' or 'off_policy'");
    }
    read(q, "q", "epsilon", c.q.epsilon);
    read(q, "q", "lr", c.q.lr);
    read_size(q, "q", "steps", c.q.steps);
    read_size(q, "q", "max_len", c.q.max_len);
    read(q, "q", "init", c.q_init);
    c.q.decode = read_decode(q, "q", c.q.decode);
  }
  if (!(c.q.epsilon >= 0.0 && c.q.epsilon <= 1.0)) throw ConfigError("q.epsilon", "must lie in [0, 1]");
  if (!(c.q.lr > 0.0)) throw ConfigError("q.lr", "must be positive");
  if (c.q.max_len < 1) throw ConfigError("q.max_len", "must be at least 1");
  if (c.q_init != "base" && c.q_init != "zero") throw ConfigError("q.init", "expected 'base' or 'zero'");

  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"every", "trials", "tau", "decode", "max_pairs", "heatmap_current", "heatmap_size"});
    read_size(e, "eval", "every", c.eval.every);
    read_size(e, "eval", "trials", c.eval.trials);
    read(e, "eval", "tau", c.eval.tau);
    read(e, "eval", "decode", c.eval.decode);
    read_size(e, "eval", "max_pairs", c.eval.max_pairs);
    read(e, "eval", "heatmap_current", c.eval.heatmap_current);
    read(e, "eval", "heatmap_size", c.eval.heatmap_size);
  }
  if (c.eval.every < 1) throw ConfigError("eval.every", "must be at least 1");
  if (c.eval.trials < 1) throw ConfigError("eval.trials", "must be at least 1");
  if (!(c.eval.tau > 0.0)) throw ConfigError("eval.tau", "must be positive");
  if (c.eval.decode != "auto" && c.eval.decode != "greedy" && c.eval.decode != "temperature")
    throw ConfigError("eval.decode", "expected 'auto', 'greedy' or 'temperature'");
  if (c.eval.heatmap_size < 1) throw ConfigError("eval.heatmap_size", "must be at least 1");

  if ((c.stage == "pg" || c.stage == "q") && c.base_model.empty() &&
      !(c.stage == "q" && c.q_init == "zero" && c.q.behavior == Behavior::on_policy))
    throw ConfigError("base_model", "is required for the " + c.stage + " stage");
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["name"] = c.run_name();
  j["graph"] = c.graph.kind == "blocksworld"
                   ? json{{"kind", c.graph.kind}, {"blocks", c.graph.blocks}}
                   : json{{"kind", c.graph.kind}, {"n", c.graph.n}, {"p", c.graph.p}};
  j["split"] = {{"train_fraction", c.train_fraction}};
  if (c.rl_train_fraction) j["split"]["rl_train_fraction"] = *c.rl_train_fraction;
  j["model"] = c.model;
  j["sft"] = {{"paths_per_pair", c.paths_per_pair}, {"num_paths", c.num_paths}, {"steps", c.sft.steps},
              {"lr", c.sft.lr}, {"batch", c.sft.batch}};
  j["stage"] = c.stage;
  if (!c.base_model.empty()) j["base_model"] = c.base_model;
  j["pg"] = {{"r", c.pg.r}, {"p", c.pg.p}, {"lambda", c.pg.lambda}, {"lr", c.pg.lr},
             {"rollouts_per_step", c.pg.rollouts_per_step}, {"steps", c.pg.steps}, {"max_len", c.pg.max_len}};
  j["pg"].update(decode_json(c.pg.decode));
  j["q"] = {{"reward_mode", to_string(c.q.reward_mode)}, {"epsilon", c.q.epsilon},
            {"behavior", to_string(c.q.behavior)}, {"lr", c.q.lr}, {"steps", c.q.steps},
            {"max_len", c.q.max_len}, {"init", c.q_init}};
  j["q"].update(decode_json(c.q.decode));
  j["eval"] = {{"every", c.eval.every}, {"trials", c.eval.trials}, {"tau", c.eval.tau},
               {"decode", c.eval.decode}, {"max_pairs", c.eval.max_pairs},
               {"heatmap_current", c.eval.heatmap_current}, {"heatmap_size", c.eval.heatmap_size}};
  if (!c.out.empty()) j["out"] = c.out;
  return j;
}

fs::path output_root(const std::optional<std::string>& cli_out, const ExperimentConfig* cfg) {
  if (const char* env = std::getenv("PLANDYN_OUT"); env && *env) return env;
  if (cli_out && !cli_out->empty()) return *cli_out;
  if (cfg && !cfg->out.empty()) return cfg->out;
  return "runs";
}

std::vector<Pair> World::stage_train(const ExperimentConfig& cfg) const {
  if (cfg.stage != "sft" && rl) return rl->rl_train();
  return split.train;
}

std::vector<Pair> World::stage_test(const ExperimentConfig& cfg) const {
  if (cfg.stage != "sft" && rl) return rl->rl_test();
  return split.test;
}

World build_world(const ExperimentConfig& cfg) {
  World w;
  if (cfg.graph.kind == "blocksworld") w.graph = blocksworld_graph(cfg.graph.blocks);
  else w.graph = gen_erdos_renyi_dag(cfg.graph.n, cfg.graph.p, derive_seed(cfg.seed, "graph"));
  w.split = split_pairs(w.graph, cfg.train_fraction, derive_seed(cfg.seed, "split"));
  if (cfg.rl_train_fraction)
    w.rl = make_rl_split(w.graph, *cfg.rl_train_fraction, w.split, derive_seed(cfg.seed, "rl_split"));
  return w;
}

Model make_model(const std::string& kind, int num_nodes) {
  if (kind == "tabular") return TabularPolicy(num_nodes);
  if (kind == "linear") return LinearPolicy(num_nodes);
  throw std::invalid_argument("unknown model kind '" + kind + "'");
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::is_directory(path)) return path / "checkpoints" / "final.json";
  return path;
}

namespace {

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08zu.json", step);
  return buf;
}

std::vector<Pair> eval_subset(const std::vector<Pair>& pairs, std::size_t max_pairs, std::uint64_t seed) {
  if (max_pairs == 0 || pairs.size() <= max_pairs) return pairs;
  std::vector<Pair> p = pairs;
  Rng rng(seed);
  shuffle(std::span<Pair>(p), rng);
  p.resize(max_pairs);
  std::sort(p.begin(), p.end());
  return p;
}

class RunWriter {
 public:
  RunWriter(fs::path dir, json manifest) : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

  void text(const std::string& rel, const std::string& body) {
    write_text(dir_ / rel, body);
    add(rel);
  }
  void json_file(const std::string& rel, const json& j) {
    write_json(dir_ / rel, j);
    add(rel);
  }
  void add(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
  }
  void flush_manifest() {
    manifest_["files"] = files_;
    write_json(dir_ / "manifest.json", manifest_);
  }
  json& manifest() { return manifest_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  json manifest_;
  std::vector<std::string> files_;
};

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& run_dir) {
  fs::create_directories(run_dir / "checkpoints");
  fs::create_directories(run_dir / "heatmaps");

  const World world = build_world(cfg);
  const Graph& g = world.graph;
  const int n = g.num_nodes();

  std::optional<Model> base;
  if (!cfg.base_model.empty()) {
    base = load_model(resolve_checkpoint(cfg.base_model).string());
    if (num_nodes(*base) != n)
      throw ConfigError("base_model", "checkpoint has " + std::to_string(num_nodes(*base)) +
                                          " nodes but the graph has " + std::to_string(n));
  }

  const json resolved = config_to_json(cfg);
  RunWriter out(run_dir, {{"config", resolved},
                          {"seed", cfg.seed},
                          {"name", cfg.run_name()},
                          {"stage", cfg.stage},
                          {"version", std::string(version())},
                          {"started_at", utc_timestamp()},
                          {"finished_at", nullptr},
                          {"status", "running"}});
  out.json_file("config.json", resolved);
  out.json_file("graph.json", graph_to_json(g));
  out.json_file("splits.json", splits_to_json(world.split, world.rl ? &*world.rl : nullptr));

  Model model = make_model(cfg.model, n);
  std::optional<SftDataset> corpus;
  if (cfg.stage == "sft") {
    corpus = cfg.num_paths > 0
                 ? sample_sft_paths(g, world.split.train, cfg.num_paths, derive_seed(cfg.seed, "corpus"))
                 : sample_sft_dataset(g, world.split.train, cfg.paths_per_pair, derive_seed(cfg.seed, "corpus"));
    std::ostringstream text;
    write_corpus(text, corpus->sequences, n);
    out.text("corpus.txt", text.str());
  } else if (base && !(cfg.stage == "q" && cfg.q_init == "zero")) {
    if (model_kind(*base) != cfg.model)
      throw ConfigError("model", "base checkpoint is '" + model_kind(*base) + "'");
    model = *base;
  }
  out.text("metrics.csv", csv_header() + "\n");
  out.flush_manifest();

  const auto train_pairs = world.stage_train(cfg);
  const auto test_pairs = world.stage_test(cfg);
  const auto eval_train = eval_subset(train_pairs, cfg.eval.max_pairs, derive_seed(cfg.seed, "eval_train"));
  const auto eval_test = eval_subset(test_pairs, cfg.eval.max_pairs, derive_seed(cfg.seed, "eval_test"));

  EvalOptions opts;
  opts.trials = cfg.eval.trials;
  const bool q_stage = cfg.stage == "q";
  opts.style = q_stage ? RolloutStyle::terminal : RolloutStyle::language;
  opts.max_len = q_stage ? cfg.q.max_len : cfg.pg.max_len;
  const std::string decode = cfg.eval.decode == "auto" ? (q_stage ? "greedy" : "temperature") : cfg.eval.decode;
  opts.decode = decode == "greedy" ? DecodeConfig::greedy() : DecodeConfig::temperature(cfg.eval.tau);
  EvalOptions greedy = opts;
  greedy.decode = DecodeConfig::greedy();
  EvalOptions sampled = opts;
  sampled.decode = DecodeConfig::temperature(cfg.eval.tau);

  std::vector<int> heat_nodes;
  for (int k = 0; k < std::min(n, cfg.eval.heatmap_size); ++k) heat_nodes.push_back(k);
  const int heat_current = std::clamp(cfg.eval.heatmap_current, 0, n - 1);

  std::ofstream csv(run_dir / "metrics.csv", std::ios::app);
  RunResult result{run_dir, {}};

  auto evaluate = [&](std::size_t step, const Model& m) {
    Rng rng(derive_seed(cfg.seed, "eval/" + std::to_string(step)));
    RunRecord rec;
    rec.step = step;
    const SampleStats train_sampled = sample_stats(m, g, eval_train, sampled, rng);
    rec.diversity = train_sampled.diversity;
    rec.train_acc = decode == "greedy" ? accuracy(m, g, eval_train, greedy, rng) : train_sampled.accuracy;
    if (!eval_test.empty()) rec.test_acc = accuracy(m, g, eval_test, opts, rng);
    const auto fs_stats = feasibility_stats(m, g, train_pairs);
    rec.kl_uniform_mean = fs_stats.kl_uniform_mean;
    rec.invalid_mass = fs_stats.invalid_mass_mean;
    try {
      rec.adjacency_auc = adjacency_recovery(m, g);
    } catch (const std::invalid_argument&) {
      rec.adjacency_auc = 0.5;
    }
    rec.extra["decode"] = decode;
    rec.extra["train_acc_greedy"] = accuracy(m, g, eval_train, greedy, rng);
    rec.extra["train_acc_sampled"] = train_sampled.accuracy;
    if (!eval_test.empty()) rec.extra["test_acc_greedy"] = accuracy(m, g, eval_test, greedy, rng);
    rec.extra["test_pairs"] = test_pairs.size();
    if (world.rl) {
      for (const auto& [name, pairs] : {std::pair{"train2train", &world.rl->train2train},
                                        std::pair{"train2test", &world.rl->train2test},
                                        std::pair{"test2train", &world.rl->test2train},
                                        std::pair{"test2test", &world.rl->test2test}})
        if (!pairs->empty()) rec.extra[std::string("acc_") + name] = accuracy(m, g, *pairs, opts, rng);
    }
    csv << to_csv_row(rec) << '\n';
    csv.flush();
    result.records.push_back(rec);

    const std::string name = step_name(step);
    save_model(m, (run_dir / "checkpoints" / name).string());
    out.add("checkpoints/" + name);
    LogitHeatmap h = snapshot_logits(m, g, heat_current, heat_nodes, heat_nodes);
    h.step = step;
    out.json_file("heatmaps/" + name, heatmap_to_json(h));
    out.flush_manifest();
  };

  const std::size_t total_steps = cfg.stage == "sft" ? cfg.sft.steps : cfg.stage == "pg" ? cfg.pg.steps : cfg.q.steps;
  auto maybe_eval = [&](std::size_t step, const Model& m) {
    if (step % cfg.eval.every == 0 || step == total_steps) evaluate(step, m);
  };

  evaluate(0, model);
  if (cfg.stage == "sft") {
    Rng rng(derive_seed(cfg.seed, "sft"));
    if (cfg.sft.batch == 0) train_sft(model, corpus->counts, cfg.sft, maybe_eval);
    else train_sft(model, corpus->sequences, cfg.sft, rng, maybe_eval);
  } else if (cfg.stage == "pg") {
    Rng rng(derive_seed(cfg.seed, "pg"));
    train_pg(model, base ? &*base : nullptr, g, train_pairs, cfg.pg, rng, maybe_eval);
  } else {
    Rng rng(derive_seed(cfg.seed, "q"));
    QHooks hooks;
    hooks.after = [&](std::size_t step, const Model& m, const Sequence&) { maybe_eval(step, m); };
    train_q(model, base ? &*base : nullptr, g, train_pairs, cfg.q, rng, hooks);
  }

  save_model(model, (run_dir / "checkpoints" / "final.json").string());
  out.add("checkpoints/final.json");
  out.manifest()["finished_at"] = utc_timestamp();
  out.manifest()["status"] = "complete";
  out.flush_manifest();
  return result;
}

namespace {

void pin_infeasible(TabularPolicy& t, const Graph& g) {
  const int n = g.num_nodes();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto row = t.logits(i, j);
      if (i == j) {
        for (int k = 0; k < n; ++k) row[static_cast<std::size_t>(k)] = kMaskedLogit;
        continue;
      }
      const FeasibleSet c = feasible_next(g, i, j);
      for (int k = 0; k <= n; ++k)
        if (!c.contains(k)) row[static_cast<std::size_t>(k)] = kMaskedLogit;
    }
  }
}

std::vector<TheoremReport> verify_builtin_ppo(std::uint64_t seed) {
  const Graph g = gen_erdos_renyi_dag(10, 0.3, derive_seed(seed, "verify/graph"));
  TabularPolicy t(g.num_nodes());
  Rng rng(derive_seed(seed, "verify/model"));
  for (double& x : t.data()) x = 2.0 * uniform01(rng) - 1.0;
  // Bias every context toward its feasible tokens so rollouts mix valid and invalid paths.
  for (int i = 0; i < g.num_nodes(); ++i)
    for (int j = 0; j < g.num_nodes(); ++j) {
      for (int k : feasible_next(g, i, j).members) t.at(i, j, k) += 3.0;
      if (i == j) t.at(i, j, g.num_nodes()) += 3.0;
    }
  const Model m = t;
  TheoremBundle b;
  b.graph = &g;
  b.model = &m;
  b.pairs = reachable_pairs(g);
  b.seed = seed;
  return {verify_theorem(TheoremId::PPO, b)};
}

}  // namespace

std::vector<TheoremReport> verify_run(const std::optional<fs::path>& run_dir, const std::vector<TheoremId>& ids,
                                      std::uint64_t seed) {
  if (!run_dir) {
    for (TheoremId id : ids)
      if (id != TheoremId::PPO)
        throw std::invalid_argument(std::string(to_string(id)) + " needs a run directory");
    std::vector<TheoremReport> out;
    for (std::size_t k = 0; k < ids.size(); ++k) out.push_back(verify_builtin_ppo(seed).front());
    return out;
  }
  const fs::path dir = *run_dir;
  if (!fs::exists(dir / "config.json")) throw std::runtime_error(dir.string() + " is not a run directory");
  const ExperimentConfig cfg = parse_config(read_json(dir / "config.json"));
  const Graph g = graph_from_json(read_json(dir / "graph.json"));
  const json splits = read_json(dir / "splits.json");
  const fs::path ckpt = dir / "checkpoints" / "final.json";
  if (!fs::exists(ckpt)) throw std::runtime_error("run has no final checkpoint: " + ckpt.string());
  const Model model = load_model(ckpt.string());

  std::vector<Pair> train = pairs_from_json(splits.at("train"));
  if (cfg.stage != "sft" && splits.contains("train2train")) {
    train = pairs_from_json(splits.at("train2train"));
    const auto extra = pairs_from_json(splits.at("test2train"));
    train.insert(train.end(), extra.begin(), extra.end());
    std::sort(train.begin(), train.end());
  }

  std::optional<Model> base;
  if (!cfg.base_model.empty()) base = load_model(resolve_checkpoint(cfg.base_model).string());

  std::optional<CountTensor> counts;
  if (fs::exists(dir / "corpus.txt")) {
    std::ifstream in(dir / "corpus.txt");
    counts = count_transitions(g.num_nodes(), read_corpus(in, g.num_nodes()));
  }

  std::vector<TheoremReport> reports;
  for (TheoremId id : ids) {
    TheoremBundle b;
    b.graph = &g;
    b.model = &model;
    b.base = base ? &*base : nullptr;
    b.counts = counts ? &*counts : nullptr;
    b.pairs = train;
    b.pg = cfg.pg;
    b.seed = seed;
    if (id == TheoremId::T4) {
      // The collapse statement assumes infeasible logits already at the sentinel.
      TabularPolicy pinned = std::holds_alternative<TabularPolicy>(model)
                                 ? std::get<TabularPolicy>(model)
                                 : std::get<LinearPolicy>(model).to_tabular();
      pin_infeasible(pinned, g);
      const Model pinned_model = pinned;
      b.model = &pinned_model;
      reports.push_back(verify_theorem(id, b));
      continue;
    }
    reports.push_back(verify_theorem(id, b));
  }
  return reports;
}

}  // namespace plandyn
