#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
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

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("slbal_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + SLBAL_EXE + "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_F(Cli, RunWritesOneRowPerTick) {
  const auto r = run("run --scenario frontal --condition comp --set scenario.duration=0.2 --out \"" + dir_.string() + "/o\"");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mean CoM-SUP distance"), std::string::npos);
  const std::string csv = slurp(dir_ / "o" / "trial_frontal_comp_seed1.csv");
  EXPECT_EQ(count_lines(csv), 1u + 200u);
  const std::string meta = slurp(dir_ / "o" / "trial_frontal_comp_seed1.meta");
  EXPECT_NE(meta.find("config_hash = "), std::string::npos);
  EXPECT_NE(slurp(dir_ / "o" / "config.cfg").find("planner.gamma = "), std::string::npos);
}

TEST_F(Cli, SameSeedGivesIdenticalCsv) {
  const std::string common = "run --scenario frontal --condition honly --seed 7 --set scenario.duration=0.2 --out \"" + dir_.string();
  ASSERT_EQ(run(common + "/a\"").code, 0);
  ASSERT_EQ(run(common + "/b\"").code, 0);
  const std::string a = slurp(dir_ / "a" / "trial_frontal_honly_seed7.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "trial_frontal_honly_seed7.csv"));
}

TEST_F(Cli, TimingColumnOnlyOnRequest) {
  ASSERT_EQ(run("run --set scenario.duration=0.05 --out \"" + dir_.string() + "/p\"").code, 0);
  ASSERT_EQ(run("run --timing --set scenario.duration=0.05 --out \"" + dir_.string() + "/t\"").code, 0);
  EXPECT_EQ(slurp(dir_ / "p" / "trial_frontal_comp_seed1.csv").find("solve_time"), std::string::npos);
  EXPECT_NE(slurp(dir_ / "t" / "trial_frontal_comp_seed1.csv").find("solve_time[s]"), std::string::npos);
}

TEST_F(Cli, UnknownOverrideKeyExitsTwo) {
  const auto r = run("run --set mpc.qq=1 --out \"" + dir_.string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("mpc.qq"), std::string::npos);
}

TEST_F(Cli, ConfigErrorReportsLineAndColumn) {
  const fs::path cfg = dir_ / "bad.cfg";
  std::ofstream(cfg) << "# header\nplanner.gamma = 1\nmpc.horizon = soon\n";
  const auto r = run("run --config \"" + cfg.string() + "\" --out \"" + dir_.string() + "\"");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.cfg:3:15"), std::string::npos) << r.err;
}

TEST_F(Cli, InvalidRatesAreAConfigError) {
  const auto r = run("run --set sim.obs_rate=300 --out \"" + dir_.string() + "\"");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("run --scenario sideways").code, 2);
  EXPECT_EQ(run("sweep --param nope --values 1,2 --set scenario.duration=0.05 --out \"" + dir_.string() + "\"").code, 2);
}

TEST_F(Cli, KeysListsUnits) {
  const auto r = run("keys");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("planner.gamma [1/m^2]"), std::string::npos);
  EXPECT_NE(r.out.find("mpc.k0 [-]"), std::string::npos);
}

TEST_F(Cli, CompareWritesSummaryAndPlots) {
  const auto r = run("compare --set scenario.duration=0.3 --jobs 2 --out \"" + dir_.string() + "/c\"");
  EXPECT_TRUE(r.code == 0 || r.code == 1) << r.err;
  EXPECT_NE(r.out.find("CoM-SUP Comp < min(HOnly, NoComp): "), std::string::npos);
  const std::string summary = slurp(dir_ / "c" / "summary_frontal.csv");
  EXPECT_EQ(count_lines(summary), 4u);
  EXPECT_EQ(slurp(dir_ / "c" / "com_sup_frontal.svg").rfind("<svg", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "c" / "grf_frontal.svg"));
  EXPECT_TRUE(fs::exists(dir_ / "c" / "trial_frontal_nocomp_seed1.csv"));
}

TEST_F(Cli, SweepHasOneRowPerValue) {
  const auto r = run("sweep --param planner.gamma --values 0.1,1,10 --set scenario.duration=0.1 --out \"" + dir_.string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "sweep_frontal.csv");
  EXPECT_EQ(count_lines(csv), 1u + 3u * 3u);
  EXPECT_EQ(csv.rfind("planner.gamma[1/m^2],", 0), 0u);
}
