#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stockrl/cli.hpp"
#include "temp_dir.hpp"

using namespace stockrl;
using stockrl::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kCatalog = std::string(STOCKRL_DATA_DIR) + "/items.json";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// Runs the CLI with outputs redirected under a fresh directory.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override { ::setenv("STOCKRL_OUTPUT_DIR", dir.str().c_str(), 1); }
  void TearDown() override { ::unsetenv("STOCKRL_OUTPUT_DIR"); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_cli(args, out, err);
  }

  TempDir dir;
  std::ostringstream out, err;
};

std::vector<std::string> small_train(const std::string& out_dir, const std::string& items, std::uint64_t seed) {
  return {"train", "--preset", "ppo_c", "--items", items, "--timesteps", "4000", "--seed", std::to_string(seed),
          "--set", "fcnet_hidden=[8,8]", "--set", "train_batch_size=1000", "--set", "sgd_minibatch_size=500",
          "--set", "num_sgd_iter=2", "--out", out_dir};
}

}  // namespace

TEST_F(CliTest, EvalWritesOneItemRowAndClusterRow) {
  ASSERT_EQ(run({"eval", "--catalog", kCatalog, "--items", "0", "--policy", "minmax", "--horizon", "240", "--reps",
                 "100", "--seed", "7", "--out", "report.csv"}),
            0)
      << err.str();
  const auto rows = lines_of(read_file(dir / "report.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], kReportHeader);
  EXPECT_EQ(rows[1].rfind("item,0,minmax,", 0), 0u) << rows[1];
  EXPECT_EQ(rows[2].rfind("cluster,0,minmax,", 0), 0u) << rows[2];
  EXPECT_NE(rows[1].find(",100,240,7"), std::string::npos);
}

TEST_F(CliTest, EvalIsByteReproducibleAcrossRunsAndThreads) {
  const std::vector<std::string> base{"eval", "--items", "0,1,2", "--shared", "--policy", "oracle",
                                      "--reps",  "12",    "--seed",  "3"};
  auto with = [&](std::string out_name, std::string threads) {
    auto a = base;
    a.insert(a.end(), {"--out", out_name, "--threads", threads, "--logs", out_name + ".logs"});
    return a;
  };
  ASSERT_EQ(run(with("a.csv", "1")), 0) << err.str();
  ASSERT_EQ(run(with("b.csv", "1")), 0);
  ASSERT_EQ(run(with("c.csv", "3")), 0);
  const auto a = read_file(dir / "a.csv");
  EXPECT_EQ(lines_of(a).size(), 5u);
  EXPECT_EQ(a, read_file(dir / "b.csv"));
  EXPECT_EQ(a, read_file(dir / "c.csv"));
  EXPECT_EQ(read_file(dir / "a.csv.logs"), read_file(dir / "c.csv.logs"));
}

TEST_F(CliTest, EvalFromConfigFile) {
  std::ofstream(dir / "exp.json") << R"({"clusters":[{"name":"pair","items":[3,4]}],"policy":"zero",)"
                                     R"("horizon":10,"replications":2,"seed":1})";
  ASSERT_EQ(run({"eval", "--config", (dir / "exp.json").string(), "--out", "r.csv"}), 0) << err.str();
  const auto rows = lines_of(read_file(dir / "r.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].rfind("cluster,pair,zero,", 0), 0u);
  EXPECT_NE(rows[1].find(",2,10,1"), std::string::npos);
}

TEST_F(CliTest, FitToyHistories) {
  std::ofstream(dir / "d.csv") << "item_id,period,value\n0,0,0\n0,1,3\n0,2,0\n0,3,5\n";
  std::ofstream(dir / "l.csv") << "item_id,order_id,lead_time\n0,0,2\n0,1,4\n0,2,6\n";
  ASSERT_EQ(run({"fit", "--demands", (dir / "d.csv").string(), "--leads", (dir / "l.csv").string(), "--out",
                 "fitted.json"}),
            0)
      << err.str();
  const auto cat = load_catalog((dir / "fitted.json").string());
  EXPECT_DOUBLE_EQ(cat.at(0).b, 0.5);
  EXPECT_DOUBLE_EQ(cat.at(0).mu, 4.0);
  EXPECT_DOUBLE_EQ(cat.at(0).p, 0.25);
}

TEST_F(CliTest, TrainWritesCheckpointAndMonotoneCurve) {
  ASSERT_EQ(run(small_train("run", "0", 1)), 0) << err.str();
  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "agent_0.json"));
  const auto curve = read_curve((dir / "run" / "curve.csv").string());
  ASSERT_EQ(curve.size(), 4u);
  for (std::size_t k = 1; k < curve.size(); ++k) EXPECT_GT(curve[k].timesteps, curve[k - 1].timesteps);
  EXPECT_EQ(curve.back().timesteps, 4000);
}

TEST_F(CliTest, TrainIsByteReproducible) {
  ASSERT_EQ(run(small_train("r1", "0,1", 5)), 0) << err.str();
  ASSERT_EQ(run(small_train("r2", "0,1", 5)), 0);
  for (const auto* name : {"0/manifest.json", "0/agent_0.json", "0/curve.csv", "1/agent_0.json", "1/curve.csv"})
    EXPECT_EQ(read_file(dir / "r1" / name), read_file(dir / "r2" / name)) << name;
  ASSERT_EQ(run(small_train("r3", "0,1", 6)), 0);
  EXPECT_NE(read_file(dir / "r1" / "0/agent_0.json"), read_file(dir / "r3" / "0/agent_0.json"));
}

TEST_F(CliTest, IppoTrainReplayAndCurves) {
  auto args = small_train("ippo", "0,1", 2);
  args.push_back("--shared");
  ASSERT_EQ(run(args), 0) << err.str();
  EXPECT_TRUE(fs::exists(dir / "ippo" / "agent_1.json"));
  ASSERT_EQ(run({"replay", "--run", (dir / "ippo").string(), "--reps", "3", "--horizon", "50", "--out", "rep.csv"}),
            0)
      << err.str();
  const auto rows = lines_of(read_file(dir / "rep.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[3].rfind("cluster,0+1,ppo,", 0), 0u);

  ASSERT_EQ(run({"curves", "--run", (dir / "ippo").string(), "--reps", "3", "--out", "plot.csv"}), 0) << err.str();
  const auto plot = lines_of(read_file(dir / "plot.csv"));
  EXPECT_EQ(plot[0], kPlotHeader);
  EXPECT_EQ(plot.size(), 1u + 4u + 4u);
  EXPECT_EQ(plot[5].rfind("minmax,,1000,", 0), 0u) << plot[5];
  EXPECT_NE(plot[5].find(",-1"), std::string::npos);
}

TEST_F(CliTest, AverageModeReplaysOnEveryTarget) {
  auto args = small_train("avg", "2,3,4", 1);
  args.push_back("--average");
  ASSERT_EQ(run(args), 0) << err.str();
  const auto run_m = load_run((dir / "avg" / "manifest.json").string());
  EXPECT_EQ(run_m.mode, TrainMode::average);
  EXPECT_EQ(run_m.targets.size(), 3u);
  ASSERT_EQ(run({"replay", "--run", (dir / "avg").string(), "--reps", "2", "--horizon", "20", "--out", "a.csv"}),
            0)
      << err.str();
  EXPECT_EQ(lines_of(read_file(dir / "a.csv")).size(), 1u + 3u * 2u);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"bogus"}), 2);
  EXPECT_EQ(run({"eval", "--items", "0", "--frobnicate"}), 2);
  EXPECT_EQ(run({"eval", "--catalog", "/no/such/file.json", "--items", "0"}), 2);
  EXPECT_EQ(run({"eval", "--items", "0", "--policy", "psychic"}), 2);
  EXPECT_EQ(run({"eval"}), 2);
  EXPECT_EQ(run({"eval", "--items", "999"}), 2);
  EXPECT_EQ(run({"fit", "--demands", "/no/such.csv", "--leads", "/no/such.csv"}), 2);
  EXPECT_EQ(run({"train", "--preset", "nope", "--items", "0"}), 2);
  EXPECT_EQ(run({"train", "--items", "0", "--set", "not_a_field=1"}), 2);
  EXPECT_EQ(run({"replay", "--run", "/no/such/dir"}), 2);
  EXPECT_EQ(run({"curves"}), 2);
  EXPECT_FALSE(err.str().empty());
}

TEST_F(CliTest, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_NE(out.str().find("train"), std::string::npos);
}

TEST_F(CliTest, OutputDirectoryVariableIsHonoured) {
  ASSERT_EQ(run({"eval", "--items", "0", "--reps", "2", "--horizon", "5", "--out", "nested/r.csv"}), 0);
  EXPECT_TRUE(fs::exists(dir / "nested" / "r.csv"));
  TempDir other;
  const auto abs = (other / "abs.csv").string();
  ASSERT_EQ(run({"eval", "--items", "0", "--reps", "2", "--horizon", "5", "--out", abs}), 0);
  EXPECT_TRUE(fs::exists(abs));
}
