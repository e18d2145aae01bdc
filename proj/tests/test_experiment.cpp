#include <chrono>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "support.hpp"

namespace mtal {
namespace {

namespace fs = std::filesystem;

std::string config_text(const ExperimentConfig& c) {
  std::ostringstream out;
  write_config(out, c);
  return out.str();
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

TEST(Config, WrittenConfigParsesBackUnchanged) {
  auto c = test::toy_config();
  c.feedback = FeedbackKind::kImplicit;
  c.dense_implicit = false;
  c.seeds = {3, 1, 4};
  c.alignment = AlignmentMode::kItemAligned;
  c.assist.eta_mode = EtaMode::kOptimized;
  c.assist.privacy.mechanism = PrivacyMechanism::kInterval;
  c.assist.privacy.width = 0.125;
  c.bus = BusBackend::kTcp;
  const auto text = config_text(c);
  EXPECT_EQ(config_text(parse(text)), text);
}

TEST(Config, DefaultsAndSections) {
  const auto c = parse("[data]\nsource = synthetic\n[experiment]\nfeedback = implicit\n[assist]\neta_mode = optimized\n");
  EXPECT_EQ(c.feedback, FeedbackKind::kImplicit);
  EXPECT_TRUE(c.dense_implicit);
  EXPECT_EQ(c.assist.eta_mode, EtaMode::kOptimized);
  EXPECT_EQ(c.assist.rounds, 10u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{0, 1, 2, 3}));
  EXPECT_EQ(c.alignment_mode(), AlignmentMode::kUserAligned);
  EXPECT_EQ(parse("[data]\nsource = synthetic\n[partition]\nkind = uniform\n").alignment_mode(), AlignmentMode::kItemAligned);
}

TEST(Config, UnknownKeysAndBadValuesAreErrors) {
  EXPECT_THROW(parse("[assist]\nrounds_ = 3\n"), ConfigError);
  EXPECT_THROW(parse("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse("[assist]\nrounds = three\n"), ConfigError);
  EXPECT_THROW(parse("[assist]\neta_mode = adaptive\n"), ConfigError);
  EXPECT_THROW(parse("[privacy]\nmechanism = gaussian\nclip = -1\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, OverridesApplyBySectionAndKey) {
  auto c = test::toy_config();
  apply_overrides(c, {"assist.rounds=7", "experiment.seeds=5,6", "privacy.mechanism=gaussian"});
  EXPECT_EQ(c.assist.rounds, 7u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{5, 6}));
  EXPECT_EQ(c.assist.privacy.mechanism, PrivacyMechanism::kGaussian);
  EXPECT_THROW(apply_overrides(c, {"rounds=7"}), ConfigError);
}

TEST(Summary, MeanAndStandardErrorOverSeeds) {
  std::vector<MetricRow> rows;
  for (std::uint64_t s = 0; s < 4; ++s) rows.push_back({2, "all", "test", "rmse", 1.0 + s, s});
  rows.push_back({2, "0", "test", "map", std::nan(""), 0});
  const auto sum = summarize(rows);
  ASSERT_EQ(sum.size(), 2u);
  EXPECT_DOUBLE_EQ(sum[0].mean, 2.5);
  // sample sd sqrt(5/3) over sqrt(4)
  EXPECT_NEAR(sum[0].stderr_, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(sum[0].n, 4u);
  EXPECT_EQ(sum[1].n, 0u);
  EXPECT_TRUE(std::isnan(sum[1].mean));
}

TEST(RunSeed, IsDeterministicAndCoversEveryRound) {
  const auto c = test::toy_config();
  const auto data = load_data(c);
  const auto a = run_seed(c, data, 1);
  const auto b = run_seed(c, data, 1);
  ASSERT_EQ(a.size(), b.size());
  std::set<std::uint32_t> rounds;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].value, b[i].value);
    rounds.insert(a[i].round);
  }
  EXPECT_EQ(rounds.size(), c.assist.rounds + 1u);
  const auto other = run_seed(c, data, 2);
  EXPECT_NE(other.back().value, a.back().value);
}

TEST(RunSeed, MtalImprovesTheToyTrainLoss) {
  auto c = test::toy_config();
  c.local.fit.epochs = 10;
  const auto rows = run_seed(c, load_data(c), 0);
  double first = NAN, last = NAN;
  for (const auto& r : rows) {
    if (r.domain != "all" || r.metric != "loss") continue;
    if (r.round == 0) first = r.value;
    if (r.round == c.assist.rounds) last = r.value;
  }
  EXPECT_LT(last, first);
}

TEST(RunSeed, AloneAndJointScenariosRun) {
  for (auto scenario : {Scenario::kAlone, Scenario::kJoint}) {
    auto c = test::toy_config();
    c.scenario = scenario;
    c.alone_checkpoints = 2;
    const auto rows = run_seed(c, load_data(c), 0);
    std::uint32_t max_round = 0;
    for (const auto& r : rows) max_round = std::max(max_round, r.round);
    EXPECT_EQ(max_round, 2u) << to_string(scenario);
  }
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("mtal_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  int mtal(const std::string& args) {
    const std::string cmd = std::string(MTAL_CLI_PATH) + " --log-level off " + args + " > " +
                            (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  fs::path write_toy() {
    auto c = test::toy_config();
    c.seeds = {0, 1};
    c.output_dir = dir / "out";
    c.checkpoints = true;
    std::ofstream(dir / "toy.ini") << config_text(c);
    return dir / "toy.ini";
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  fs::path dir;
};

TEST_F(Cli, ToyRunFinishesQuicklyAndEvalReplaysIt) {
  const auto cfg = write_toy();
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(mtal("run --config " + cfg.string()), 0) << slurp(dir / "stderr.txt");
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
  for (auto f : {"config.ini", "metrics.csv", "summary.csv", "checkpoints/seed1/domain2.ens"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  ASSERT_EQ(mtal("eval --config " + cfg.string() + " --seed 1 --csv " + (dir / "eval.csv").string()), 0)
      << slurp(dir / "stderr.txt");
  // every replayed row appears verbatim among the run's metrics
  const auto metrics = slurp(dir / "out" / "metrics.csv");
  std::istringstream replay(slurp(dir / "eval.csv"));
  std::string line;
  std::getline(replay, line);
  int n = 0;
  while (std::getline(replay, line)) {
    EXPECT_NE(metrics.find(line + "\n"), std::string::npos) << line;
    ++n;
  }
  EXPECT_GT(n, 0);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(mtal("--help"), 0);
  EXPECT_EQ(mtal("frobnicate"), 2);
  EXPECT_EQ(mtal("run --config " + (dir / "missing.ini").string()), 2);
  std::ofstream(dir / "bad.ini") << "[assist]\nroundz = 3\n";
  EXPECT_EQ(mtal("run --config " + (dir / "bad.ini").string()), 2);
  EXPECT_NE(slurp(dir / "stderr.txt").find("roundz"), std::string::npos);
  EXPECT_EQ(mtal("run --config " + write_toy().string() + " --set data.source=snapshot --set partition.kind=uniform --set data.path=" +
                 (dir / "nope.bin").string()),
            1);
}

TEST_F(Cli, IngestWritesASnapshot) {
  std::ofstream(dir / "r.csv") << "user,item,rating,ts\na,x,4,1\nb,x,2,2\na,y,5,3\n";
  ASSERT_EQ(mtal("ingest --source ratings --format csv --input " + (dir / "r.csv").string() + " --output " +
                 (dir / "r.bin").string()),
            0)
      << slurp(dir / "stderr.txt");
  const auto d = load_snapshot((dir / "r.bin").string());
  EXPECT_EQ(d.entries.size(), 3u);
  EXPECT_EQ(d.num_users(), 2);
}

}  // namespace
}  // namespace mtal
