// End-to-end runs of the command-line tool.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kdebias/io.hpp"

namespace fs = std::filesystem;
using kdebias::io::json;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::path(KDEBIAS_TEST_TMP) / "cli";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Per-test capture file, so test processes running in parallel do not collide.
fs::path capture(const char* stream) {
  return tmp_dir() / (std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "." + stream);
}

/// Runs the CLI with args; stdout and stderr go to per-test capture files.
int run(const std::string& args) {
  const std::string cmd = std::string("\"") + KDEBIAS_CLI_PATH + "\" " + args + " > \"" +
                          capture("stdout").string() + "\" 2> \"" + capture("stderr").string() + "\"";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string last_stdout() { return slurp(capture("stdout")); }

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(last_stdout().find("bias-report"), std::string::npos);
  EXPECT_EQ(run("bias-report --help"), 0);
}

TEST(Cli, UnknownSubcommandIsValidationError) { EXPECT_EQ(run("no-such-command"), 2); }

TEST(Cli, BiasReportDefaultGaussianCase) {
  const fs::path out = tmp_dir() / "br.json";
  fs::remove(out);
  ASSERT_EQ(run("bias-report --out \"" + out.string() + "\""), 0);
  const json j = read_json(out);
  EXPECT_EQ(j["format_version"], 1);
  EXPECT_EQ(j["command"], "bias-report");
  EXPECT_FALSE(j["config"].contains("threads"));
  const json& r = j["result"]["reports"][0];
  // N(0,1) smoothed by N(0,0.25): exact value at 0 is phi_{1.25}(0) - phi_1(0).
  const double s = std::sqrt(1.25);
  const double want = 1.0 / (s * std::sqrt(2.0 * M_PI)) - 1.0 / std::sqrt(2.0 * M_PI);
  EXPECT_NEAR(r["exact_bias"].get<double>(), want, 1e-9);
  EXPECT_NEAR(want, -0.04212, 1e-5);
  EXPECT_TRUE(r["bound_satisfied"].get<bool>());
}

TEST(Cli, FlagsOverrideConfig) {
  const fs::path cfg = tmp_dir() / "cfg.json";
  const fs::path out = tmp_dir() / "override.json";
  kdebias::io::write_atomic(cfg, R"({"bandwidths": [0.5], "queries": [[0.0]], "k": 2})");
  ASSERT_EQ(run("bias-report --config \"" + cfg.string() + "\" --bandwidth 0.25 --query 1.0 --out \"" +
                out.string() + "\""),
            0);
  const json j = read_json(out);
  EXPECT_DOUBLE_EQ(j["result"]["reports"][0]["x_query"][0].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j["result"]["reports"][0]["h_norm"].get<double>(), 0.25);
  EXPECT_EQ(j["config"]["k"], 2);
  EXPECT_EQ(j["config"]["seed"], 0);
}

TEST(Cli, MissingInputIsValidationErrorAndWritesNothing) {
  const fs::path out = tmp_dir() / "est.csv";
  const fs::path q = tmp_dir() / "q.csv";
  fs::remove(out);
  kdebias::io::write_atomic(q, "x1\n0\n");
  EXPECT_EQ(run("estimate --samples \"" + (tmp_dir() / "absent.csv").string() + "\" --queries \"" + q.string() +
                "\" --bandwidth 0.5 --out \"" + out.string() + "\""),
            2);
  EXPECT_FALSE(fs::exists(out));

  const fs::path cfg_out = tmp_dir() / "nocfg.json";
  EXPECT_EQ(run("bias-report --config \"" + (tmp_dir() / "absent.json").string() + "\" --out \"" +
                cfg_out.string() + "\""),
            2);
  EXPECT_FALSE(fs::exists(cfg_out));
}

TEST(Cli, NonSpdBandwidthIsValidationError) {
  const fs::path out = tmp_dir() / "nonspd.json";
  fs::remove(out);
  EXPECT_EQ(run("bias-report --density '{\"kind\":\"standard_gaussian\",\"dim\":2}' --bandwidth '[[1,2],[2,1]]' "
                "--out \"" + out.string() + "\""),
            2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run("bias-report --bandwidth -0.5"), 2);
}

TEST(Cli, OutputDirectoryMissingIsValidationError) {
  EXPECT_EQ(run("bias-report --out \"" + (tmp_dir() / "no_dir" / "x.json").string() + "\""), 2);
}

TEST(Cli, AllPointsExcludedIsNumericalFailure) {
  const fs::path out = tmp_dir() / "flat.json";
  fs::remove(out);
  const std::string density =
      R"('{"kind":"gaussian_mixture","components":[{"weight":1.0,"mean":[0.0],"cov":1e8}]}')";
  EXPECT_EQ(run("bias-scaling --density " + density + " --query 0 --out \"" + out.string() + "\""), 3);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, EstimateWritesCsv) {
  const fs::path s = tmp_dir() / "s.csv", q = tmp_dir() / "q2.csv", out = tmp_dir() / "est2.csv";
  kdebias::io::write_atomic(s, "x1\n-1\n0\n1\n");
  kdebias::io::write_atomic(q, "x1\n0\n");
  ASSERT_EQ(run("estimate --samples \"" + s.string() + "\" --queries \"" + q.string() +
                "\" --bandwidth 1 --out \"" + out.string() + "\""),
            0);
  const std::string text = slurp(out);
  ASSERT_EQ(text.rfind("x1,estimate\n0,", 0), 0u) << text;
  const double got = std::stod(text.substr(std::string("x1,estimate\n0,").size()));
  const double want = (2.0 * std::exp(-0.5) + 1.0) / (3.0 * std::sqrt(2.0 * M_PI));
  EXPECT_NEAR(got, want, 1e-15);
}

TEST(Cli, ThreadCountDoesNotChangeBytes) {
  const std::string args =
      "mse-scaling --n-min-log2 6 --n-max-log2 9 --replicates 50 --seed 7 --out \"";
  std::string ref;
  for (int t : {1, 2, 8}) {
    const fs::path out = tmp_dir() / "mse_threads.json";
    ASSERT_EQ(run(args + out.string() + "\" --threads " + std::to_string(t)), 0);
    const std::string bytes = slurp(out);
    if (ref.empty()) ref = bytes;
    EXPECT_EQ(bytes, ref) << "threads " << t;
  }
  std::string ref2;
  for (int t : {1, 2, 8}) {
    const fs::path out = tmp_dir() / "br_threads.json";
    ASSERT_EQ(run("bias-report --bandwidth 0.5 --bandwidth 0.25 --query 0 --query 1.5 --out \"" + out.string() +
                  "\" --threads " + std::to_string(t)),
              0);
    const std::string bytes = slurp(out);
    if (ref2.empty()) ref2 = bytes;
    EXPECT_EQ(bytes, ref2) << "threads " << t;
  }
}

TEST(Cli, ZeroThreadsRejected) { EXPECT_EQ(run("moments --threads 0"), 2); }

TEST(Cli, KernelInfoPrintsCsv) {
  ASSERT_EQ(run("kernel-info --kernel epanechnikov --max-order 2"), 0);
  const std::string text = last_stdout();
  EXPECT_EQ(text.rfind("quantity,argument,value,converged\n", 0), 0u);
  EXPECT_NE(text.find("moment,"), std::string::npos);
  EXPECT_NE(text.find("envelope,"), std::string::npos);
}

TEST(Cli, MomentsForSpikeTrain) {
  const fs::path out = tmp_dir() / "mom.json";
  ASSERT_EQ(run("moments --out \"" + out.string() + "\""), 0);
  const json j = read_json(out);
  const json& rows = j["result"]["moments"];
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[0]["value"].get<double>(), 1.0, 1e-6);
  for (const auto& r : rows) EXPECT_TRUE(r["converged"].get<bool>());
}
