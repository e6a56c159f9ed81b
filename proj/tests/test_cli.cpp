#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ttm/train.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("ttm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  CliResult run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(TTM_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path write(const std::string& name, const std::string& contents) const {
    std::ofstream(dir_ / name, std::ios::binary) << contents;
    return dir_ / name;
  }

  fs::path dir_;
};

const char* kSmallConfig = R"({
  "data": {"generator": {"kind": "no-shift", "n": 400, "seed": 1}},
  "model": {"variant": "%s", "hidden": [16], "d_embedding": 8, "h_mod": 8,
            "orders": {"year": 2, "month": 2, "day": 2, "hour": 2}},
  "train": {"batch_size": 64, "max_epochs": 4, "patience": 2}
})";

std::string small_config(const std::string& variant) {
  std::string s = kSmallConfig;
  s.replace(s.find("%s"), 2, variant);
  return s;
}

TEST_F(Cli, GenerateWritesRowsDeterministically) {
  const auto a = dir_ / "a.csv", b = dir_ / "b.csv";
  ASSERT_EQ(run("generate --kind concept-shift --n 10 --seed 0 --out " + a.string()).code, 0);
  ASSERT_EQ(run("generate --kind concept-shift --n 10 --seed 0 --out " + b.string()).code, 0);
  const auto ls = lines(slurp(a));
  ASSERT_EQ(ls.size(), 11u);
  EXPECT_EQ(ls[0], "x0,x1,y,t");
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  const auto r = run("generate --kind bogus --n 10 --out " + (dir_ / "x.csv").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--kind"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --out-dir x").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, IoErrorExitsOne) {
  EXPECT_EQ(run("generate --kind none --n 5 --out /nonexistent/dir/x.csv").code, 1);
  const auto r = run("train --config " + (dir_ / "missing.json").string() + " --out-dir " + dir_.string());
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, ConfigErrorNamesFileAndKey) {
  const auto cfg = write("bad.json", R"({"data": {"generator": {"kind": "none"}}, "model": {"hiden": [4]}})");
  const auto r = run("train --config " + cfg.string() + " --out-dir " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bad.json"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("model.hiden"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainWritesArtifactsDeterministically) {
  const auto cfg = write("cfg.json", small_config("static"));
  const auto r1 = run("train --config " + cfg.string() + " --out-dir " + (dir_ / "o1").string());
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_TRUE(std::regex_match(lines(r1.out).at(0), std::regex(R"(variant=static metric=auc:[0-9.]+ best_epoch=\d+)")))
      << r1.out;
  const auto r2 = run("train --config " + cfg.string() + " --out-dir " + (dir_ / "o2").string());
  ASSERT_EQ(r2.code, 0);
  EXPECT_EQ(r1.out, r2.out);
  EXPECT_EQ(slurp(dir_ / "o1" / "result.json"), slurp(dir_ / "o2" / "result.json"));
  EXPECT_EQ(slurp(dir_ / "o1" / "model.bin"), slurp(dir_ / "o2" / "model.bin"));

  const json j = json::parse(slurp(dir_ / "o1" / "result.json"));
  for (const char* key : {"best_epoch", "history", "test_metrics", "seed", "config", "initial_train_loss"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto model = ttm::load_model(dir_ / "o1" / "model.bin");
  EXPECT_EQ(model.model.spec().variant, ttm::Variant::Static);
}

TEST_F(Cli, ModulatedFirstLossMatchesStatic) {
  const auto s = write("s.json", small_config("static"));
  const auto m = write("m.json", small_config("modulated"));
  ASSERT_EQ(run("train --config " + s.string() + " --out-dir " + (dir_ / "s").string()).code, 0);
  ASSERT_EQ(run("train --config " + m.string() + " --out-dir " + (dir_ / "m").string()).code, 0);
  const json js = json::parse(slurp(dir_ / "s" / "result.json"));
  const json jm = json::parse(slurp(dir_ / "m" / "result.json"));
  EXPECT_NEAR(js["initial_train_loss"].get<double>(), jm["initial_train_loss"].get<double>(), 1e-12);
}

TEST_F(Cli, TrainLearningRateGrid) {
  const auto cfg = write("cfg.json", small_config("static"));
  const auto r = run("train --config " + cfg.string() + " --out-dir " + (dir_ / "o").string() +
                     " --lr-grid 0.0003,0.001,0.003");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(dir_ / "o" / "result.json"));
  ASSERT_EQ(j["lr_grid"].size(), 3u);
  double best = -1;
  for (const auto& g : j["lr_grid"]) best = std::max(best, g["best_val_metric"].get<double>());
  EXPECT_EQ(j["best_val_metric"].get<double>(), best);
}

TEST_F(Cli, AblateEmitsEightRowsPerSeed) {
  const auto cfg = write("cfg.json", small_config("modulated"));
  const auto csv = dir_ / "ablation.csv";
  const auto r = run("ablate --config " + cfg.string() + " --seeds 0,1 --out " + csv.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(slurp(csv));
  ASSERT_EQ(ls.size(), 1u + 16u + 8u);
  EXPECT_EQ(ls[0], "in,rep,out,metric,improvement_pct");
  const auto metric = [&](std::size_t i) {
    std::stringstream ss(ls[i]);
    std::string f;
    for (int k = 0; k < 4; ++k) std::getline(ss, f, ',');
    return std::stod(f);
  };
  for (std::size_t g = 0; g < 8; ++g) {
    EXPECT_NEAR(metric(17 + g), (metric(1 + g) + metric(9 + g)) / 2, 1e-15);
  }
  EXPECT_TRUE(fs::exists(dir_ / "ablation.json"));
}

TEST_F(Cli, PilotIsDeterministic) {
  const std::string flags = " --n 300 --seeds 0 --max-epochs 2";
  ASSERT_EQ(run("pilot --out-dir " + (dir_ / "p1").string() + flags).code, 0);
  ASSERT_EQ(run("pilot --out-dir " + (dir_ / "p2").string() + flags).code, 0);
  for (const char* kind : {"concept", "covariate", "label", "none"}) {
    EXPECT_TRUE(fs::is_directory(dir_ / "p1" / kind / "grids"));
    EXPECT_EQ(slurp(dir_ / "p1" / kind / "metrics" / "metrics.json"),
              slurp(dir_ / "p2" / kind / "metrics" / "metrics.json"));
    EXPECT_EQ(slurp(dir_ / "p1" / kind / "grids" / "modulated_segment4.csv"),
              slurp(dir_ / "p2" / kind / "grids" / "modulated_segment4.csv"));
  }
  EXPECT_EQ(slurp(dir_ / "p1" / "metrics.json"), slurp(dir_ / "p2" / "metrics.json"));
}

double field(const std::string& line, int idx) {
  std::stringstream ss(line);
  std::string f;
  for (int k = 0; k <= idx; ++k) std::getline(ss, f, ',');
  return f.empty() ? std::nan("") : std::stod(f);
}

TEST_F(Cli, StatsMatchGoldenFile) {
  const std::string data = std::string(TTM_TEST_DATA) + "/stats_input.csv";
  const auto out = dir_ / "stats.csv";
  ASSERT_EQ(run("stats --data " + data + " --windows 3 --out " + out.string()).code, 0);
  const auto got = lines(slurp(out));
  const auto want = lines(slurp(std::string(TTM_TEST_DATA) + "/stats_golden_w3.csv"));
  ASSERT_EQ(got.size(), want.size());
  EXPECT_EQ(got[0], want[0]);
  for (std::size_t i = 1; i < got.size(); ++i) {
    EXPECT_EQ(got[i].substr(0, got[i].find(",", got[i].find(",", got[i].find(",") + 1) + 1)),
              want[i].substr(0, want[i].find(",", want[i].find(",", want[i].find(",") + 1) + 1)));
    for (int c = 4; c <= 6; ++c) EXPECT_NEAR(field(got[i], c), field(want[i], c), 1e-12) << got[i];
  }
  const auto out2 = dir_ / "stats2.csv";
  ASSERT_EQ(run("stats --data " + data + " --windows 3 --out " + out2.string()).code, 0);
  EXPECT_EQ(slurp(out), slurp(out2));
}

TEST_F(Cli, StatsWindowCounts) {
  const auto csv = dir_ / "g.csv";
  ASSERT_EQ(run("generate --kind covariate --n 240 --out " + csv.string()).code, 0);
  ASSERT_EQ(run("stats --data " + csv.string() + " --windows 12 --out " + (dir_ / "s12.csv").string()).code, 0);
  EXPECT_EQ(lines(slurp(dir_ / "s12.csv")).size(), 1u + 12u * 2u);
  ASSERT_EQ(run("stats --data " + csv.string() + " --windows 1 --out " + (dir_ / "s1.csv").string()).code, 0);
  EXPECT_EQ(lines(slurp(dir_ / "s1.csv")).size(), 3u);
}

TEST_F(Cli, SweepWritesGrid) {
  const auto cfg = write("cfg.json", small_config("modulated"));
  ASSERT_EQ(run("sweep --config " + cfg.string() + " --dims 4,8 --out " + (dir_ / "sw.csv").string()).code, 0);
  const auto ls = lines(slurp(dir_ / "sw.csv"));
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], "variant,d_embedding,auc");
}

}  // namespace
