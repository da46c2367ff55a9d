#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "defend/app/commands.hpp"
#include "defend/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "defend");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = defend::app::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

const json kSmall = {
    {"generator", {{"n_nodes", 200}}},
    {"train", {{"phase1_max_epochs", 10}, {"patience", 5}, {"phase2_epochs", 10}, {"hidden", 8}, {"latent", 4}}},
    {"baseline", {{"epochs", 10}, {"hidden", 8}, {"latent", 4}}},
    {"seeds", {0, 1}}};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("defend_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config(const json& j, const std::string& name = "config.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p.string();
  }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }

  fs::path dir_;
};

TEST_F(CliTest, GenerateIsByteDeterministic) {
  const auto cfg = config(kSmall);
  auto a = cli({"--config", cfg, "--out", path("a"), "generate"});
  auto b = cli({"--config", cfg, "--out", path("b"), "generate"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(a.out.find("N=200"), std::string::npos);
  EXPECT_EQ(a.out, b.out);
  for (const auto& entry : fs::directory_iterator(path("a"))) {
    EXPECT_EQ(slurp(entry.path()), slurp(dir_ / "b" / entry.path().filename())) << entry.path().filename();
  }
  auto c = cli({"--config", cfg, "--out", path("c"), "--seed", "5", "generate"});
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "nodes.csv"), slurp(dir_ / "c" / "nodes.csv"));
}

TEST_F(CliTest, ConfigAndDataErrorsExitTwo) {
  auto bad_field = cli({"--config", config({{"generator", {{"minority_ratio", 1.5}}}}), "--out", path("g"),
                        "generate"});
  EXPECT_EQ(bad_field.code, 2);
  EXPECT_NE(bad_field.err.find("generator.minority_ratio"), std::string::npos) << bad_field.err;

  auto unknown_key = cli({"--config", config({{"train", {{"mystery", 1}}}}), "--out", path("t"), "train"});
  EXPECT_EQ(unknown_key.code, 2);
  EXPECT_NE(unknown_key.err.find("train.mystery"), std::string::npos) << unknown_key.err;

  std::ofstream(dir_ / "broken.json") << "{not json";
  EXPECT_EQ(cli({"--config", path("broken.json"), "--out", path("x"), "generate"}).code, 2);

  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(cli({"--config", config(kSmall), "--out", path("y"), "train", "--data", path("empty")}).code, 2);

  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
}

TEST_F(CliTest, NonFiniteTrainingExitsThree) {
  const auto cfg = config(kSmall);
  ASSERT_EQ(cli({"--config", cfg, "--out", path("data"), "generate"}).code, 0);
  // Overflowing attributes make the reconstruction loss infinite.
  auto rows = csv(dir_ / "data" / "nodes.csv");
  std::ostringstream patched;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      patched << (c ? "," : "") << (r > 0 && c >= 3 ? "1e300" : rows[r][c]);
    }
    patched << "\n";
  }
  std::ofstream(dir_ / "data" / "nodes.csv", std::ios::trunc) << patched.str();
  auto r = cli({"--config", cfg, "--out", path("run"), "train", "--data", path("data")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(CliTest, TrainReportIsReproducibleApartFromTimestamp) {
  const auto cfg = config(kSmall);
  ASSERT_EQ(cli({"--config", cfg, "--out", path("a"), "train"}).code, 0);
  ASSERT_EQ(cli({"--config", cfg, "--out", path("b"), "train"}).code, 0);
  auto a = json::parse(slurp(dir_ / "a" / "report.json"));
  auto b = json::parse(slurp(dir_ / "b" / "report.json"));
  ASSERT_TRUE(a.contains("timestamp"));
  a.erase("timestamp");
  b.erase("timestamp");
  EXPECT_EQ(a.dump(), b.dump());
  auto ca = json::parse(slurp(dir_ / "a" / "config.json"));
  auto cb = json::parse(slurp(dir_ / "b" / "config.json"));
  ca.erase("output_dir");
  cb.erase("output_dir");
  EXPECT_EQ(ca, cb);
  for (const char* f : {"checkpoint.json", "history.csv", "scores.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_EQ(csv(dir_ / "a" / "history.csv")[0].back(), "abs_pearson_o_s");
}

TEST_F(CliTest, HistoryOmitsCorrColumnWithoutCorrelationTerm) {
  json full = kSmall, no_corr = kSmall;
  no_corr["train"]["variant"] = "NO_CORR";
  ASSERT_EQ(cli({"--config", config(full, "f.json"), "--out", path("f"), "train"}).code, 0);
  ASSERT_EQ(cli({"--config", config(no_corr, "n.json"), "--out", path("n"), "train"}).code, 0);
  const auto hf = csv(dir_ / "f" / "history.csv")[0];
  const auto hn = csv(dir_ / "n" / "history.csv")[0];
  EXPECT_NE(std::find(hf.begin(), hf.end(), "corr"), hf.end());
  EXPECT_EQ(std::find(hn.begin(), hn.end(), "corr"), hn.end());
  EXPECT_EQ(hf.size(), hn.size() + 1);
}

TEST_F(CliTest, EvalRescoresSavedRun) {
  const auto cfg = config(kSmall);
  ASSERT_EQ(cli({"--config", cfg, "--out", path("run"), "train"}).code, 0);
  auto r = cli({"eval", "--run", path("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(slurp(dir_ / "run" / "report.json"));
  const auto ev = json::parse(slurp(dir_ / "run" / "eval.json"));
  EXPECT_EQ(ev["eval"].dump(), report["eval"].dump());

  // A config that no longer matches the checkpoint is refused.
  auto edited = json::parse(slurp(dir_ / "run" / "config.json"));
  edited["train"]["hidden"] = 9;
  std::ofstream(dir_ / "run" / "config.json", std::ios::trunc) << edited.dump();
  EXPECT_EQ(cli({"eval", "--run", path("run")}).code, 2);
}

TEST_F(CliTest, AblationTableShape) {
  auto r = cli({"--config", config(kSmall), "--out", path("abl"), "ablate"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv(dir_ / "abl" / "ablation_table.csv");
  const std::size_t variants = defend::app::ablation_variants().size();
  ASSERT_EQ(rows.size(), 1 + variants * (2 + 1));
  EXPECT_EQ(rows[0][0], "variant");
  // Data rows come first (two seeds per variant), then one summary row per variant.
  for (std::size_t v = 0; v < variants; ++v) {
    const auto& sum = rows[1 + 2 * variants + v];
    EXPECT_EQ(sum[1], "mean±std");
    EXPECT_EQ(sum.back(), "summary");
    std::vector<double> column;
    for (std::size_t r = 1; r <= 2 * variants; ++r) {
      if (rows[r][0] == sum[0]) column.push_back(std::stod(rows[r][2]));
    }
    ASSERT_EQ(column.size(), 2u) << sum[0];
    const double mean = std::stod(sum[2].substr(0, sum[2].find("±")));
    EXPECT_NEAR(mean, 0.5 * (column[0] + column[1]), 1e-9);
  }
}

TEST_F(CliTest, SinglePointSweepMatchesTrain) {
  json spec = kSmall;
  spec["seeds"] = {0};
  spec["axes"] = {{"weights.beta", {2.0}}};
  ASSERT_EQ(cli({"--config", config(spec, "s.json"), "--out", path("sw"), "sweep"}).code, 0);
  json one = kSmall;
  one["weights"] = {{"beta", 2.0}};
  ASSERT_EQ(cli({"--config", config(one, "t.json"), "--out", path("tr"), "--seed", "0", "train"}).code, 0);
  const auto rows = csv(dir_ / "sw" / "tradeoff.csv");
  ASSERT_EQ(rows.size(), 2u);
  const auto report = json::parse(slurp(dir_ / "tr" / "report.json"));
  const auto& header = rows[0];
  const auto col = [&](const std::string& name) {
    return std::stod(rows[1][std::find(header.begin(), header.end(), name) - header.begin()]);
  };
  EXPECT_NEAR(col("auc_roc"), report["eval"]["auc_roc"].get<double>(), 1e-12);
  EXPECT_NEAR(col("delta_dp"), report["eval"]["delta_dp"].get<double>(), 1e-12);
}

TEST_F(CliTest, ParetoRowsAreMutuallyNonDominated) {
  json spec = kSmall;
  spec["axes"] = {{"weights.beta", {0.0, 1.0, 10.0}}, {"train.variant", {"FULL", "NO_CORR"}}};
  auto r = cli({"--config", config(spec), "--out", path("sw"), "sweep"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv(dir_ / "sw" / "tradeoff.csv").size(), 1u + 6 * 2);
  const auto rows = csv(dir_ / "sw" / "pareto.csv");
  ASSERT_GE(rows.size(), 2u);
  const std::size_t n = rows[0].size();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    for (std::size_t j = 1; j < rows.size(); ++j) {
      if (i == j) continue;
      const double ai = std::stod(rows[i][n - 2]), ei = std::stod(rows[i][n - 1]);
      const double aj = std::stod(rows[j][n - 2]), ej = std::stod(rows[j][n - 1]);
      EXPECT_FALSE(aj >= ai && ej <= ei && (aj > ai || ej < ei)) << "row " << j << " dominates row " << i;
    }
  }
}

TEST_F(CliTest, SweepRejectsGeneratorAxes) {
  json spec = kSmall;
  spec["axes"] = {{"generator.homophily", {0.5, 0.9}}};
  EXPECT_EQ(cli({"--config", config(spec), "--out", path("sw"), "sweep"}).code, 2);
}

TEST_F(CliTest, BaselineRegularizers) {
  const auto cfg = config(kSmall);
  auto early = cli({"--config", cfg, "--out", path("bl"), "baseline", "--reg", "fairod"});
  EXPECT_EQ(early.code, 2);
  EXPECT_NE(early.err.find("--reg none"), std::string::npos) << early.err;

  ASSERT_EQ(cli({"--config", cfg, "--out", path("bl"), "baseline", "--reg", "none"}).code, 0);
  const auto none_scores = slurp(dir_ / "bl" / "scores.csv");
  EXPECT_EQ(none_scores, slurp(dir_ / "bl" / "base_scores.csv"));
  ASSERT_EQ(cli({"--config", cfg, "--out", path("bl"), "baseline", "--reg", "fairod"}).code, 0);
  EXPECT_NE(slurp(dir_ / "bl" / "scores.csv"), none_scores);

  json zero = kSmall;
  zero["baseline"]["lambda"] = 0.0;
  ASSERT_EQ(cli({"--config", config(zero, "z.json"), "--out", path("hin"), "baseline", "--reg", "hin"}).code, 0);
  EXPECT_EQ(slurp(dir_ / "hin" / "scores.csv"), none_scores);

  auto bogus = cli({"--config", cfg, "--out", path("bl"), "baseline", "--reg", "fancy"});
  EXPECT_EQ(bogus.code, 2);
  for (const char* name : {"none", "fairod", "correlation", "hin"}) {
    EXPECT_NE(bogus.err.find(name), std::string::npos) << bogus.err;
  }
}

}  // namespace
