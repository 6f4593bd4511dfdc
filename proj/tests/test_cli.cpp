#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "plandyn/experiment.hpp"

using namespace plandyn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string output;
};

Result run(const std::string& args, bool prefix_binary = true) {
  const std::string cmd = (prefix_binary ? std::string(PLANDYN_CLI) + " " : std::string()) + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("plandyn_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double last_column(const fs::path& csv, const std::string& column) {
  std::istringstream in(read_text(csv));
  std::string header, line, last;
  std::getline(in, header);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  std::istringstream h(header), l(last);
  std::string name, value;
  while (std::getline(h, name, ',') && std::getline(l, value, ','))
    if (name == column) return std::stod(value);
  throw std::runtime_error("no column " + column);
}

}  // namespace

TEST(Cli, GenGraphIsDeterministic) {
  const auto dir = scratch("gen");
  ASSERT_EQ(run("gen-graph --er 100 0.15 --seed 7 --out " + dir.string() + " --name a.json").code, 0);
  ASSERT_EQ(run("gen-graph --er 100 0.15 --seed 7 --out " + dir.string() + " --name b.json").code, 0);
  EXPECT_EQ(read_text(dir / "a.json"), read_text(dir / "b.json"));
  EXPECT_EQ(graph_from_json(read_json(dir / "a.json")).num_nodes(), 100);
  ASSERT_EQ(run("gen-graph --blocksworld 4 --out " + dir.string() + " --name bw.json").code, 0);
  EXPECT_EQ(graph_from_json(read_json(dir / "bw.json")).num_nodes(), 73);
  EXPECT_NE(run("gen-graph --er 10 1.5 --out " + dir.string()).code, 0);
  EXPECT_NE(run("gen-graph --out " + dir.string()).code, 0);
}

TEST(Cli, SftThenPgReachesFullTrainAccuracy) {
  const auto dir = scratch("pipeline");
  const json sft{{"seed", 1},
                 {"name", "sft"},
                 {"graph", {{"kind", "er_dag"}, {"n", 30}, {"p", 0.2}}},
                 {"sft", {{"steps", 2000}, {"lr", 0.2}}},
                 {"eval", {{"every", 500}, {"trials", 20}}}};
  write_json(dir / "sft.json", sft);
  json pg = sft;
  pg["name"] = "pg";
  pg["stage"] = "pg";
  pg["base_model"] = (dir / "runs" / "sft").string();
  pg["pg"] = {{"steps", 2000}, {"lr", 0.5}, {"rollouts_per_step", 32}};
  write_json(dir / "pg.json", pg);
  ASSERT_EQ(run("train --config " + (dir / "sft.json").string() + " --out " + (dir / "runs").string()).code, 0);
  const auto r = run("train --config " + (dir / "pg.json").string() + " --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(last_column(dir / "runs" / "pg" / "metrics.csv", "train_acc"), 1.0);
}

TEST(Cli, OutcomeQCollapses) {
  const auto dir = scratch("outcome");
  const json sft{{"seed", 2},
                 {"name", "sft"},
                 {"graph", {{"kind", "er_dag"}, {"n", 15}, {"p", 0.25}}},
                 {"split", {{"train_fraction", 0.5}}},
                 {"sft", {{"steps", 1000}, {"lr", 0.2}}},
                 {"eval", {{"every", 1000}, {"trials", 10}}}};
  json q = sft;
  q["name"] = "q";
  q["stage"] = "q";
  q["base_model"] = (dir / "runs" / "sft").string();
  q["q"] = {{"reward_mode", "outcome"}, {"epsilon", 0.2}, {"steps", 20000}, {"lr", 0.05}, {"init", "zero"}};
  q["eval"]["every"] = 5000;
  write_json(dir / "sft.json", sft);
  write_json(dir / "q.json", q);
  ASSERT_EQ(run("train --config " + (dir / "sft.json").string() + " --out " + (dir / "runs").string()).code, 0);
  const auto r = run("train --config " + (dir / "q.json").string() + " --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_LT(last_column(dir / "runs" / "q" / "metrics.csv", "train_acc"), 0.1);
  EXPECT_LT(last_column(dir / "runs" / "q" / "metrics.csv", "test_acc"), 0.1);
}

TEST(Cli, BadConfigNamesTheKey) {
  const auto dir = scratch("badcfg");
  write_text(dir / "c.json", R"({"seed": 1, "sft": {"stepz": 3}})");
  const auto r = run("train --config " + (dir / "c.json").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("sft.stepz"), std::string::npos) << r.output;
}

TEST(Cli, VerifyPpoWithoutRunAndUnknownId) {
  const auto dir = scratch("verify");
  const auto ok = run("verify --theorems PPO --out " + dir.string());
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("PASS"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "verify.json"));
  EXPECT_EQ(run("verify --theorems T42 --out " + dir.string()).code, 2);
}

TEST(Cli, EnvOverridesOutAndJobsRunsConcurrently) {
  const auto dir = scratch("env");
  json a{{"seed", 1}, {"name", "a"}, {"graph", {{"kind", "er_dag"}, {"n", 10}, {"p", 0.3}}},
         {"sft", {{"steps", 20}}}, {"eval", {{"every", 10}, {"trials", 2}}}};
  json b = a;
  b["name"] = "b";
  write_json(dir / "a.json", a);
  write_json(dir / "b.json", b);
  const std::string cmd = "train --config " + (dir / "a.json").string() + " --config " + (dir / "b.json").string() +
                          " --jobs 2 --out " + (dir / "flagroot").string();
  const auto r = run(cmd);
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "flagroot" / "a" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "flagroot" / "b" / "manifest.json"));
  const auto r2 = run("PLANDYN_OUT=" + (dir / "envroot").string() + " " + std::string(PLANDYN_CLI) + " " + cmd, false);
  ASSERT_EQ(r2.code, 0) << r2.output;
  EXPECT_TRUE(fs::exists(dir / "envroot" / "a" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "envroot" / "b" / "manifest.json"));
}

TEST(Cli, ExportTwiceIsByteIdentical) {
  const auto dir = scratch("export");
  json a{{"seed", 4}, {"name", "a"}, {"graph", {{"kind", "er_dag"}, {"n", 10}, {"p", 0.3}}},
         {"sft", {{"steps", 20}}}, {"eval", {{"every", 10}, {"trials", 2}}}};
  write_json(dir / "a.json", a);
  ASSERT_EQ(run("train --config " + (dir / "a.json").string() + " --out " + dir.string()).code, 0);
  ASSERT_EQ(run("export " + (dir / "a").string() + " --out " + (dir / "b1").string()).code, 0);
  ASSERT_EQ(run("export " + (dir / "a").string() + " --out " + (dir / "b2").string()).code, 0);
  for (const char* f : {"bundle.json", "metrics.csv", "runs/a/manifest.json", "runs/a/heatmaps/step_00000020.json"})
    EXPECT_EQ(read_text(dir / "b1" / f), read_text(dir / "b2" / f)) << f;
  EXPECT_NE(run("export " + (dir / "nope").string() + " --out " + (dir / "b3").string()).code, 0);
}
