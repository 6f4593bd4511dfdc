#include <gtest/gtest.h>

#include <cstdlib>

#include "plandyn/experiment.hpp"

using namespace plandyn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plandyn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json small_sft() {
  return {{"seed", 3},
          {"name", "sft"},
          {"graph", {{"kind", "er_dag"}, {"n", 12}, {"p", 0.3}}},
          {"split", {{"train_fraction", 0.5}}},
          {"sft", {{"steps", 60}, {"lr", 0.5}, {"paths_per_pair", 2}}},
          {"eval", {{"every", 20}, {"trials", 5}}}};
}

std::string config_error_key(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST(Config, ErrorsNameTheOffendingKey) {
  EXPECT_EQ(config_error_key(json{{"name", "x"}}), "seed");
  auto j = small_sft();
  j["sft"]["lrr"] = 0.1;
  EXPECT_EQ(config_error_key(j), "sft.lrr");
  j = small_sft();
  j["split"]["train_fraction"] = 1.5;
  EXPECT_EQ(config_error_key(j), "split.train_fraction");
  j = small_sft();
  j["graph"]["n"] = "ten";
  EXPECT_EQ(config_error_key(j), "graph.n");
  j = small_sft();
  j["stage"] = "pg";
  EXPECT_EQ(config_error_key(j), "base_model");
  j = small_sft();
  j["q"] = {{"reward_mode", "dense"}};
  EXPECT_EQ(config_error_key(j), "q.reward_mode");
  j = small_sft();
  j["unknown"] = 1;
  EXPECT_EQ(config_error_key(j), "unknown");
}

TEST(Config, RoundTripsThroughResolvedJson) {
  auto j = small_sft();
  j["split"]["rl_train_fraction"] = 0.4;
  const auto c = parse_config(j);
  const auto again = parse_config(config_to_json(c));
  EXPECT_EQ(config_to_json(again), config_to_json(c));
  EXPECT_EQ(*again.rl_train_fraction, 0.4);
}

TEST(Config, InvalidJsonFileIsAConfigError) {
  const auto dir = scratch("badjson");
  write_text(dir / "c.json", "{\"seed\": 1,");
  EXPECT_THROW(load_config(dir / "c.json"), ConfigError);
}

TEST(OutputRoot, Precedence) {
  ExperimentConfig c;
  c.out = "from_config";
  unsetenv("PLANDYN_OUT");
  EXPECT_EQ(output_root(std::nullopt, nullptr), fs::path("runs"));
  EXPECT_EQ(output_root(std::nullopt, &c), fs::path("from_config"));
  EXPECT_EQ(output_root(std::string("from_flag"), &c), fs::path("from_flag"));
  setenv("PLANDYN_OUT", "from_env", 1);
  EXPECT_EQ(output_root(std::string("from_flag"), &c), fs::path("from_env"));
  unsetenv("PLANDYN_OUT");
}

TEST(Run, LayoutManifestAndDeterminism) {
  const auto root = scratch("run");
  const auto cfg = parse_config(small_sft());
  const auto res = run_experiment(cfg, root / "a");
  run_experiment(cfg, root / "b");
  EXPECT_EQ(read_text(root / "a" / "metrics.csv"), read_text(root / "b" / "metrics.csv"));
  ASSERT_EQ(res.records.size(), 4u);  // steps 0, 20, 40, 60
  EXPECT_EQ(res.records.back().step, 60u);

  const json manifest = read_json(root / "a" / "manifest.json");
  EXPECT_EQ(manifest["status"], "complete");
  EXPECT_FALSE(manifest["finished_at"].is_null());
  for (const auto& f : manifest["files"]) EXPECT_TRUE(fs::exists(root / "a" / f.get<std::string>())) << f;
  EXPECT_TRUE(fs::exists(root / "a" / "checkpoints" / "final.json"));
  EXPECT_TRUE(fs::exists(root / "a" / "heatmaps" / "step_00000060.json"));
  EXPECT_TRUE(fs::exists(root / "a" / "corpus.txt"));
}

TEST(Run, RlStagesReadTheBaseAndReportFourSplits) {
  const auto root = scratch("rl");
  auto j = small_sft();
  j["split"]["rl_train_fraction"] = 0.5;
  run_experiment(parse_config(j), root / "sft");

  j["stage"] = "pg";
  j["name"] = "pg";
  j["base_model"] = (root / "sft").string();
  j["pg"] = {{"steps", 10}, {"rollouts_per_step", 8}};
  j["eval"]["every"] = 5;
  const auto pg = run_experiment(parse_config(j), root / "pg");
  EXPECT_TRUE(pg.records.back().extra.contains("acc_train2test"));

  j["stage"] = "q";
  j["name"] = "q";
  j.erase("pg");
  j["q"] = {{"steps", 10}, {"behavior", "off_policy"}, {"epsilon", 0.2}};
  const auto q = run_experiment(parse_config(j), root / "q");
  EXPECT_EQ(q.records.back().extra["decode"], "greedy");

  j["base_model"] = (root / "missing").string();
  EXPECT_THROW(run_experiment(parse_config(j), root / "q2"), std::exception);
}

TEST(Verify, RunsAgainstARunDirectory) {
  const auto root = scratch("verify");
  auto j = small_sft();
  j["sft"]["steps"] = 6000;
  j["sft"]["lr"] = 0.2;
  j["eval"]["every"] = 6000;
  run_experiment(parse_config(j), root / "sft");
  const auto reports = verify_run(root / "sft", {TheoremId::T1, TheoremId::T2, TheoremId::T3}, 0);
  ASSERT_EQ(reports.size(), 3u);
  for (const auto& r : reports) EXPECT_TRUE(r.pass) << to_string(r.id) << " " << r.residual;
  EXPECT_TRUE(verify_run(std::nullopt, {TheoremId::PPO}, 0).front().pass);
  EXPECT_THROW(verify_run(std::nullopt, {TheoremId::T1}, 0), std::invalid_argument);
}

TEST(Export, IdempotentLintedAndFlagsIncomplete) {
  const auto root = scratch("export");
  run_experiment(parse_config(small_sft()), root / "sft");
  const auto b1 = export_bundle({root / "sft"}, root / "bundle");
  EXPECT_FALSE(b1["incomplete"].get<bool>());
  EXPECT_TRUE(lint_bundle(root / "bundle").empty());
  const auto first = read_text(root / "bundle" / "bundle.json") + read_text(root / "bundle" / "metrics.csv");
  export_bundle({root / "sft"}, root / "bundle");
  EXPECT_EQ(read_text(root / "bundle" / "bundle.json") + read_text(root / "bundle" / "metrics.csv"), first);

  // Simulate a run that is still going.
  fs::copy(root / "sft", root / "live", fs::copy_options::recursive);
  auto m = read_json(root / "live" / "manifest.json");
  m["status"] = "running";
  m["name"] = "live";
  write_json(root / "live" / "manifest.json", m);
  const auto b2 = export_bundle({root / "sft", root / "live"}, root / "bundle");
  EXPECT_TRUE(b2["incomplete"].get<bool>());
  EXPECT_TRUE(lint_bundle(root / "bundle").empty());

  fs::remove(root / "live" / "metrics.csv");
  EXPECT_THROW(export_bundle({root / "live"}, root / "bundle2"), std::runtime_error);
  fs::remove(root / "bundle" / "runs" / "sft" / "metrics.csv");
  EXPECT_FALSE(lint_bundle(root / "bundle").empty());
}
