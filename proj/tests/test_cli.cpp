#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gradmask/checkpoint.hpp"
#include "gradmask/commands.hpp"
#include "gradmask/config.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gradmask_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Result {
  int code = -1;
  std::string out;
};

Result run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path log = workdir / "cli_output.txt";
  const std::string cmd = std::string(GRADMASK_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  return cells;
}

fs::path write_tiny_config(const fs::path& dir, std::size_t epochs = 2) {
  const json doc = {
      {"seed", 5},
      {"data",
       {{"synthetic", {{"count", 40}, {"n_min", 5}, {"n_max", 8}, {"p_edge", 0.3}, {"d_in", 4}, {"seed", 2}}},
        {"split", {{"mode", "counts"}, {"train", 24}, {"val", 8}, {"test", 8}}}}},
      {"model", {{"layers", 1}, {"hidden", 8}, {"heads", 2}, {"pe_dim", 3}}},
      {"train", {{"epochs", epochs}, {"batch_size", 8}}},
  };
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << "// tiny run\n" << doc.dump(2) << "\n";
  return p;
}

}  // namespace

TEST(Cli, TrainWritesAllArtifacts) {
  const fs::path dir = temp_dir("train");
  const fs::path cfg = write_tiny_config(dir);
  const fs::path out = dir / "run";
  const Result r = run_cli("train --config " + cfg.string() + " --set decay.lambda=0.35 --out " + out.string(), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* name :
       {"config.json", "run_report.json", "metrics.csv", "sp_trajectories.csv", "best.ckpt", "last.ckpt"})
    EXPECT_TRUE(fs::exists(out / name)) << name;

  const json resolved = json::parse(read_file(out / "config.json"));
  EXPECT_EQ(resolved["decay"]["lambda"], 0.35);
  EXPECT_EQ(resolved["output"]["dir"], out.string());

  const json report = json::parse(read_file(out / "run_report.json"));
  EXPECT_EQ(report["status"], "ok");
  EXPECT_EQ(report["epochs_completed"], 2);
  EXPECT_EQ(report["history"].size(), 3u);
  EXPECT_TRUE(report.contains("timing"));

  const auto metrics = lines_of(out / "metrics.csv");
  ASSERT_EQ(metrics.size(), 4u);
  EXPECT_EQ(split_csv(metrics[0])[0], "epoch");
  // One layer, two heads, epochs 0..2.
  EXPECT_EQ(lines_of(out / "sp_trajectories.csv").size(), 1u + 3u * 2u);
}

TEST(Cli, RefusesNonEmptyOutputWithoutForce) {
  const fs::path dir = temp_dir("force");
  const fs::path cfg = write_tiny_config(dir, 1);
  const fs::path out = dir / "run";
  fs::create_directories(out);
  std::ofstream(out / "keep.txt") << "x";
  const Result refused = run_cli("train --config " + cfg.string() + " --out " + out.string(), dir);
  EXPECT_EQ(refused.code, 1) << refused.out;
  EXPECT_FALSE(fs::exists(out / "run_report.json"));
  const Result forced = run_cli("train --config " + cfg.string() + " --out " + out.string() + " --force", dir);
  EXPECT_EQ(forced.code, 0) << forced.out;
  EXPECT_TRUE(fs::exists(out / "run_report.json"));
}

TEST(Cli, UnknownConfigKeyIsValidationError) {
  const fs::path dir = temp_dir("unknown");
  const Result r = run_cli("train --set model.hiden=8 --out " + (dir / "run").string(), dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("model.hiden"), std::string::npos) << r.out;
  EXPECT_EQ(run_cli("no-such-command", dir).code, 1);
}

TEST(Cli, ResumeContinuesToTheSameReport) {
  const fs::path dir = temp_dir("resume");
  const fs::path cfg = write_tiny_config(dir, 3);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "full").string(), dir).code, 0);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "part").string() + " --stop-after-epoch 1",
                    dir)
                .code,
            0);
  const Result r = run_cli("train --config " + cfg.string() + " --resume " + (dir / "part" / "last.ckpt").string() +
                               " --out " + (dir / "part").string(),
                           dir);
  ASSERT_EQ(r.code, 0) << r.out;
  json a = json::parse(read_file(dir / "full" / "run_report.json"));
  json b = json::parse(read_file(dir / "part" / "run_report.json"));
  a.erase("timing");
  b.erase("timing");
  EXPECT_EQ(a, b);
}

TEST(Cli, EvalPrintsMetricsForSplit) {
  const fs::path dir = temp_dir("eval");
  const fs::path cfg = write_tiny_config(dir, 1);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "run").string(), dir).code, 0);
  const Result r = run_cli("eval " + (dir / "run" / "best.ckpt").string() + " --split val --out " +
                               (dir / "eval").string(),
                           dir);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("accuracy"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "eval" / "eval_val.json"));
  EXPECT_EQ(run_cli("eval " + (dir / "missing.ckpt").string(), dir).code, 2);
}

TEST(Cli, GradcheckPassesAndInjectedFaultFails) {
  const fs::path dir = temp_dir("gradcheck");
  const Result ok = run_cli("gradcheck --out " + (dir / "ok").string(), dir);
  EXPECT_EQ(ok.code, 0) << ok.out;
  const json report = json::parse(read_file(dir / "ok" / "gradcheck.json"));
  EXPECT_LE(report["model_max_error"].get<double>(), 1e-4);
  const Result bad = run_cli("gradcheck --inject-fault", dir);
  EXPECT_EQ(bad.code, 3) << bad.out;
}

TEST(Cli, AblateWritesOneRowPerValue) {
  const fs::path dir = temp_dir("ablate");
  const fs::path cfg = write_tiny_config(dir, 1);
  const Result r = run_cli("ablate lambda --values 0.3 1.0 --workers 2 --config " + cfg.string() + " --out " +
                               (dir / "abl").string(),
                           dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rows = lines_of(dir / "abl" / "ablation.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(split_csv(rows[0])[0], "axis");
  EXPECT_EQ(split_csv(rows[1])[1], "0.3");
  EXPECT_EQ(split_csv(rows[2])[2], "ok");
  EXPECT_TRUE(fs::exists(dir / "abl" / "lambda_0.3" / "run_report.json"));
  EXPECT_TRUE(fs::exists(dir / "abl" / "ablation.txt"));
  EXPECT_EQ(run_cli("ablate colour", dir).code, 1);
}

TEST(Cli, InspectAttentionWithUnitLambda) {
  const fs::path dir = temp_dir("inspect");
  const fs::path cfg = write_tiny_config(dir, 1);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --set decay.lambda=1 --out " + (dir / "run").string(), dir)
                .code,
            0);
  const fs::path out = dir / "att";
  const Result r = run_cli("inspect-attention " + (dir / "run" / "best.ckpt").string() + " --graph 2 --out " +
                               out.string(),
                           dir);
  ASSERT_EQ(r.code, 0) << r.out;
  for (std::size_t h = 0; h < 2; ++h) {
    for (const auto& line : lines_of(out / ("mask_l0_h" + std::to_string(h) + ".csv")))
      for (const auto& cell : split_csv(line)) EXPECT_EQ(std::stod(cell), 1.0);
    for (const auto& line : lines_of(out / ("attention_l0_h" + std::to_string(h) + ".csv"))) {
      double total = 0.0;
      for (const auto& cell : split_csv(line)) total += std::stod(cell);
      EXPECT_NEAR(total, 1.0, 1e-10);
    }
  }
  EXPECT_TRUE(fs::exists(out / "psi.csv"));
  EXPECT_TRUE(fs::exists(out / "attention_mass.csv"));
}

TEST(Cli, GenSyntheticWritesDataset) {
  const fs::path dir = temp_dir("gen");
  const fs::path cfg = write_tiny_config(dir);
  const Result r = run_cli("gen-synthetic --config " + cfg.string() + " --out " + (dir / "data").string(), dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto lines = lines_of(dir / "data" / "dataset.jsonl");
  EXPECT_GE(lines.size(), 40u);
}

TEST(AttentionMass, BucketsByHopDistance) {
  // Path 0-1-2 plus isolated node 3.
  gradmask::StructuralIndex idx = gradmask::shortest_path_hops(
      gradmask::Graph::make(4, {{0, 1}, {1, 2}}, 1, std::vector<double>(4, 0.0), std::size_t{0}));
  std::vector<double> att(16, 0.0);
  att[0 * 4 + 0] = 0.5, att[0 * 4 + 1] = 0.25, att[0 * 4 + 2] = 0.25;
  att[1 * 4 + 1] = 1.0;
  att[2 * 4 + 0] = 0.5, att[2 * 4 + 1] = 0.5;
  att[3 * 4 + 0] = 0.4, att[3 * 4 + 3] = 0.6;
  const auto buckets = gradmask::attention_mass_by_hop(att, idx);
  std::map<std::string, double> mass;
  for (const auto& b : buckets) mass[b.bucket] = b.mean_mass;
  EXPECT_NEAR(mass["0"], (0.5 + 1.0 + 0.0 + 0.6) / 4, 1e-15);
  EXPECT_NEAR(mass["1"], (0.25 + 0.0 + 0.5 + 0.0) / 4, 1e-15);
  EXPECT_NEAR(mass["2"], (0.25 + 0.0 + 0.5 + 0.0) / 4, 1e-15);
  EXPECT_NEAR(mass["unreachable"], 0.4 / 4, 1e-15);
}
