#include <algorithm>
#include <ctime>
#include <fstream>
#include <sstream>

#include "plandyn/experiment.hpp"

namespace plandyn {

namespace fs = std::filesystem;
using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  // Write then rename so readers never see a half-written file.
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
  }
  fs::rename(tmp, p);
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

namespace {

constexpr const char* kBundleSchema = "plandyn.bundle/1";

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

void require(const fs::path& p) {
  if (!fs::exists(p)) throw std::runtime_error("missing run file " + p.string());
}

}  // namespace

json export_bundle(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw std::invalid_argument("export needs at least one run directory");

  struct Loaded {
    fs::path dir;
    std::string name;
    json manifest;
    std::string metrics;
    std::vector<std::string> heatmaps;
  };
  std::vector<Loaded> runs;
  for (const auto& dir : run_dirs) {
    require(dir / "manifest.json");
    require(dir / "metrics.csv");
    Loaded r{dir, "", read_json(dir / "manifest.json"), read_text(dir / "metrics.csv"), {}};
    r.name = r.manifest.value("name", dir.filename().string());
    if (fs::exists(dir / "heatmaps"))
      for (const auto& e : fs::directory_iterator(dir / "heatmaps"))
        if (e.path().extension() == ".json") r.heatmaps.push_back(e.path().filename().string());
    std::sort(r.heatmaps.begin(), r.heatmaps.end());
    for (const auto& other : runs)
      if (other.name == r.name) throw std::invalid_argument("duplicate run name '" + r.name + "' in export");
    runs.push_back(std::move(r));
  }

  // Clear anything a previous export left so the output is a pure function of the inputs.
  fs::remove(out_dir / "bundle.json");
  fs::remove(out_dir / "metrics.csv");
  fs::remove_all(out_dir / "runs");
  fs::create_directories(out_dir / "runs");

  json bundle{{"schema", kBundleSchema}, {"incomplete", false}, {"runs", json::array()}};
  std::ostringstream merged;
  merged << "run," << csv_header() << '\n';
  for (const auto& r : runs) {
    const fs::path dest = out_dir / "runs" / r.name;
    write_json(dest / "manifest.json", r.manifest);
    write_text(dest / "metrics.csv", r.metrics);
    json heat = json::array();
    for (const auto& h : r.heatmaps) {
      write_json(dest / "heatmaps" / h, read_json(r.dir / "heatmaps" / h));
      heat.push_back("runs/" + r.name + "/heatmaps/" + h);
    }
    const std::string status = r.manifest.value("status", "unknown");
    if (status != "complete") bundle["incomplete"] = true;
    bundle["runs"].push_back({{"name", r.name},
                              {"stage", r.manifest.value("stage", "")},
                              {"status", status},
                              {"manifest", "runs/" + r.name + "/manifest.json"},
                              {"metrics", "runs/" + r.name + "/metrics.csv"},
                              {"heatmaps", heat}});
    const auto lines = split_lines(r.metrics);
    if (lines.empty() || lines.front() != csv_header())
      throw std::runtime_error("unexpected metrics header in " + (r.dir / "metrics.csv").string());
    for (std::size_t k = 1; k < lines.size(); ++k) merged << csv_quote(r.name) << ',' << lines[k] << '\n';
  }
  write_text(out_dir / "metrics.csv", merged.str());
  write_json(out_dir / "bundle.json", bundle);
  return bundle;
}

std::vector<std::string> lint_bundle(const fs::path& dir) {
  std::vector<std::string> problems;
  if (!fs::exists(dir / "bundle.json")) return {"bundle.json is missing"};
  json b;
  try {
    b = read_json(dir / "bundle.json");
  } catch (const std::exception& e) {
    return {e.what()};
  }
  if (b.value("schema", "") != kBundleSchema) problems.push_back("schema is not " + std::string(kBundleSchema));
  if (!b.contains("incomplete") || !b["incomplete"].is_boolean()) problems.push_back("incomplete flag missing");
  if (!b.contains("runs") || !b["runs"].is_array()) {
    problems.push_back("runs is not an array");
    return problems;
  }
  if (!fs::exists(dir / "metrics.csv")) problems.push_back("metrics.csv is missing");
  else if (const auto lines = split_lines(read_text(dir / "metrics.csv"));
           lines.empty() || lines.front() != "run," + csv_header())
    problems.push_back("metrics.csv header mismatch");
  for (const auto& r : b["runs"]) {
    const std::string name = r.value("name", "");
    if (name.empty()) problems.push_back("run without a name");
    for (const char* key : {"manifest", "metrics"}) {
      if (!r.contains(key) || !fs::exists(dir / r[key].get<std::string>()))
        problems.push_back(name + ": " + key + " file missing");
    }
    if (r.contains("metrics") && fs::exists(dir / r["metrics"].get<std::string>())) {
      const auto lines = split_lines(read_text(dir / r["metrics"].get<std::string>()));
      if (lines.empty() || lines.front() != csv_header()) problems.push_back(name + ": metrics header mismatch");
    }
    for (const auto& h : r.value("heatmaps", json::array())) {
      const fs::path p = dir / h.get<std::string>();
      if (!fs::exists(p)) {
        problems.push_back(name + ": heatmap missing " + h.get<std::string>());
        continue;
      }
      try {
        heatmap_from_json(read_json(p));
      } catch (const std::exception& e) {
        problems.push_back(name + ": bad heatmap " + h.get<std::string>() + ": " + e.what());
      }
    }
  }
  return problems;
}

}  // namespace plandyn
