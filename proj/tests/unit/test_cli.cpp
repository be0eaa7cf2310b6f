#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "pdenoise/dataio.hpp"
#include "pdenoise/harness.hpp"

using namespace pdenoise;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(PDENOISE_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("pdenoise_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_text_file(dir / "prior.json", R"({"weights": [1], "means": [[0]], "covariances": [1]})");
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

}  // namespace

TEST_F(Cli, SampleAndDenoise) {
  auto r = cli("sample --prior " + p("prior.json") + " --n 300 --dim 1 --sigma2 0.25 --seed 4 --out-clean " +
               p("c.csv") + " --out-noisy " + p("y.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto clean = load_particles(dir / "c.csv");
  EXPECT_EQ(clean, sample_prior(single_gaussian_prior(1, 1.0), 300, 1, derive_seed(4, "cli_clean")));

  r = cli("denoise --in " + p("y.csv") + " --sigma2 0.25 --beta 10 --l0 40 --out " + p("e.csv") +
          " --truncate auto --snapshots " + p("snaps") + " --snapshot-every 10");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("readout_depth 40"), std::string::npos);
  EXPECT_NE(r.out.find("readout_time 0.125000"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "snaps" / "index.csv"));
  EXPECT_TRUE(fs::exists(dir / "snaps" / "snapshot_000030.csv"));

  DenoiseConfig cfg;
  cfg.sigma2 = 0.25;
  cfg.beta = 10.0;
  cfg.l0 = 40;
  cfg.horizon_mult = 1.0;
  cfg.truncation = Truncation::automatic();
  const auto ref = two_stage_denoise(load_particles(dir / "y.csv"), cfg).first.estimates;
  EXPECT_EQ(load_particles(dir / "e.csv"), ref);

  r = cli("denoise --in " + p("y.csv") + " --sigma2 0.25 --beta 10 --l0 40 --out " + p("e4.csv") +
          " --truncate auto --workers 4");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_text_file(dir / "e.csv"), read_text_file(dir / "e4.csv"));
}

TEST_F(Cli, ExitCodes) {
  auto r = cli("denoise --in " + p("missing.csv") + " --sigma2 0.25 --beta 10 --l0 40 --out " + p("e.csv"));
  EXPECT_EQ(r.code, 4) << r.out;
  r = cli("theory hitting-time --v0 1 --vstar 2 --beta 1");
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("ValidationError"), std::string::npos);
  r = cli("sample --prior " + p("prior.json") + " --n 10 --dim 1 --sigma2 0.5 --out-clean " + p("c.csv") +
          " --out-noisy " + p("y.csv"));
  ASSERT_EQ(r.code, 0);
  r = cli("denoise --in " + p("y.csv") + " --sigma2 0.5 --beta 2000 --l0 200 --out " + p("e.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("ScheduleError"), std::string::npos);
  EXPECT_NE(r.out.find("2.5"), std::string::npos);
  r = cli("bogus");
  EXPECT_EQ(r.code, 1);
  r = cli("--help");
  EXPECT_EQ(r.code, 0);
  r = cli("theory hitting-time --v0 1 --vstar 0.5 --beta 1 --precision 18");
  EXPECT_EQ(r.code, 1);
  write_text_file(dir / "bad.csv", "x0\n1\nfoo\n");
  r = cli("metrics w1 --a " + p("bad.csv") + " --b " + p("y.csv"));
  EXPECT_EQ(r.code, 4) << r.out;
}

TEST_F(Cli, TheoryCommands) {
  auto r = cli("theory hitting-time --v0 1.25 --vstar 1 --beta 1 --precision 12");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.236571775657\n");
  r = cli("theory variance-ode --v0 1 --beta 2 --t-end 0.5 --steps 5 --out " + p("v.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto lines = read_text_file(dir / "v.csv");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 7);
  EXPECT_NE(r.out.find("v_end"), std::string::npos);
  r = cli("theory covariance-flow --sigma0 '[[1,0,0],[0,0.5,0],[0,0,0]]' --tau 0.25 --beta 1000 --at-denoise-time "
          "--out " + p("cf.csv") + " --precision 9");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("recovery_gap 0.111020487"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("lambda0 0.004108422"), std::string::npos) << r.out;
  r = cli("theory truncation --n 1000 --lambda-max 1.25 --mean-norm 0 --precision 8");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("radius 9.40254908"), std::string::npos) << r.out;
}

TEST_F(Cli, MetricsW1) {
  write_text_file(dir / "a.csv", "x0\n0\n1\n");
  write_text_file(dir / "b.csv", "x0\n0\n3\n");
  for (const char* m : {"1d", "exact", "sliced"}) {
    const auto r = cli("metrics w1 --a " + p("a.csv") + " --b " + p("b.csv") + " --method " + m);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out, "1.000000\n") << m;
  }
}

TEST_F(Cli, ExperimentDeterministicAcrossWorkers) {
  write_text_file(dir / "spec.json", R"({
    "kind": "mse-vs-beta",
    "prior": {"weights": [0.5, 0.5], "means": [[-1, 0], [1, 0]], "covariances": [0.01, 0.01]},
    "config": {"sigma2": 0.25, "beta": 10, "l0": 20},
    "n": 100, "sweep": [10, 20], "seeds": [1, 2], "mmse_samples": 4000})");
  auto r1 = cli("experiment --spec " + p("spec.json") + " --out-dir " + p("o1") + " --workers 1");
  ASSERT_EQ(r1.code, 0) << r1.out;
  auto r4 = cli("experiment --spec " + p("spec.json") + " --out-dir " + p("o4") + " --workers 4");
  ASSERT_EQ(r4.code, 0) << r4.out;
  for (const char* f : {"records.csv", "normalized.csv", "mse_vs_beta.svg"})
    EXPECT_EQ(read_text_file(dir / "o1" / f), read_text_file(dir / "o4" / f)) << f;
}
