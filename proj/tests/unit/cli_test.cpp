#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tqf/model/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + TQF_CLI_PATH + " " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "tqf_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    write_file(root_ / "data.json", R"({"frames": 4, "height": 32, "width": 32, "count": 3})");
    write_file(root_ / "small.json",
               R"({"channels": 8, "text_width": 8, "embed_channels": 4, "n_app": 4, "n_intra": 2,
                   "n_inter": 2, "topk": 2, "decoder_rounds": 1, "lr": 0.001})");
    const auto r = run("gen-data --config " + (root_ / "data.json").string() + " --out " + (root_ / "data").string() +
                       " --seed 17");
    ASSERT_EQ(r.code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path root_;
};

fs::path Cli::root_;

TEST_F(Cli, GenDataWritesScenesAndManifest) {
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(root_ / "data")) dirs += e.is_directory();
  EXPECT_EQ(dirs, 3u);
  const auto manifest = json::parse(slurp(root_ / "data" / "manifest.json"));
  EXPECT_EQ(manifest.at("scenes").size(), 3u);
  EXPECT_EQ(manifest.at("scenes")[1].at("seed"), 18);

  const auto again = root_ / "data_again";
  ASSERT_EQ(run("gen-data --config " + (root_ / "data.json").string() + " --out " + again.string() + " --seed 17").code,
            0);
  EXPECT_EQ(slurp(again / "manifest.json"), slurp(root_ / "data" / "manifest.json"));
  EXPECT_EQ(slurp(again / "scene_00002" / "frames.ten"), slurp(root_ / "data" / "scene_00002" / "frames.ten"));
}

TEST_F(Cli, GenDataModeFractionsAreExact) {
  write_file(root_ / "modes.json",
             R"({"frames": 2, "height": 32, "width": 32, "count": 8,
                 "modes": {"appearance_twin": 1, "motion_twin": 2, "mixed": 1}})");
  fs::remove_all(root_ / "modes");
  ASSERT_EQ(run("gen-data --config " + (root_ / "modes.json").string() + " --out " + (root_ / "modes").string()).code,
            0);
  std::map<std::string, int> count;
  const auto manifest = json::parse(slurp(root_ / "modes" / "manifest.json"));
  for (const auto& s : manifest.at("scenes")) ++count[s.at("mode").get<std::string>()];
  EXPECT_EQ(count["appearance_twin"], 2);
  EXPECT_EQ(count["motion_twin"], 4);
  EXPECT_EQ(count["mixed"], 2);
}

TEST_F(Cli, ZeroStepCheckpointIsTheInitialization) {
  const auto ck = root_ / "ck0";
  const auto r = run("train --config " + (root_ / "small.json").string() + " --data " + (root_ / "data").string() +
                     " --out " + ck.string() + " --steps 0 --seed 3");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out).at("steps"), 0);

  auto cfg = tqf::model::RunConfig::load((root_ / "small.json").string());
  cfg.seed = 3;
  tqf::model::Model<float> fresh(cfg);
  const auto ref = root_ / "ck0_ref";
  tqf::model::save_checkpoint(ref, fresh, 0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(ref)) {
    if (e.path().extension() != ".ten") continue;
    EXPECT_EQ(slurp(e.path()), slurp(ck / e.path().filename())) << e.path().filename();
    ++compared;
  }
  EXPECT_EQ(compared, fresh.store().size());
}

TEST_F(Cli, LoggedTotalIsWeightedSumWithoutConsistency) {
  auto cfg = json::parse(slurp(root_ / "small.json"));
  cfg["lambda_con"] = 0.0;
  cfg["lambda_v"] = 2.0;
  cfg["lambda_f"] = 0.5;
  cfg["precision"] = "f64";
  write_file(root_ / "nocon.json", cfg.dump());
  const auto ck = root_ / "ck_nocon";
  ASSERT_EQ(run("train --config " + (root_ / "nocon.json").string() + " --data " + (root_ / "data").string() +
                " --out " + ck.string() + " --steps 4")
                .code,
            0);
  std::istringstream log(slurp(ck / "train_log.jsonl"));
  std::string line;
  std::getline(log, line);
  int steps = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_NEAR(j.at("l_total").get<double>(), 2.0 * j.at("l_v").get<double>() + 0.5 * j.at("l_f").get<double>(),
                1e-12);
    ++steps;
  }
  EXPECT_EQ(steps, 4);
}

TEST_F(Cli, EvalReportsAllMetricsWithAndWithoutAblation) {
  const auto ck = root_ / "ck_eval";
  ASSERT_EQ(run("train --config " + (root_ / "small.json").string() + " --data " + (root_ / "data").string() +
                " --out " + ck.string() + " --steps 2")
                .code,
            0);
  for (const std::string flag : {"", " --no-iia"}) {
    const auto r = run("eval --checkpoint " + ck.string() + " --data " + (root_ / "data").string() + flag);
    ASSERT_EQ(r.code, 0) << flag;
    const auto j = json::parse(r.out);
    for (const char* key : {"j", "f", "jf", "oiou", "miou", "map"}) {
      const double v = j.at(key).get<double>();
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_EQ(j.at("samples"), 3);
    EXPECT_EQ(j.at("ablations").at("iia"), flag.empty());
  }
  EXPECT_EQ(run("eval --checkpoint " + ck.string() + " --data " + (root_ / "data").string(), "TQF_THREADS=2").code, 0);
  EXPECT_EQ(run("eval --checkpoint " + ck.string() + " --data " + (root_ / "data").string(), "TQF_THREADS=zero").code,
            2);
}

TEST_F(Cli, GradcheckExitCodes) {
  const auto ok = run("gradcheck");
  EXPECT_EQ(ok.code, 0);
  EXPECT_TRUE(json::parse(ok.out).at("passed").get<bool>());
  EXPECT_EQ(run("gradcheck --inject-bug").code, 3);
}

TEST_F(Cli, ValidationFailuresExitTwo) {
  write_file(root_ / "bad.json", R"({"windw": 3})");
  EXPECT_EQ(run("train --config " + (root_ / "bad.json").string() + " --data " + (root_ / "data").string() +
                " --out " + (root_ / "ck_bad").string())
                .code,
            2);
  EXPECT_EQ(run("train --data " + (root_ / "missing").string() + " --out " + (root_ / "ck_bad").string()).code, 2);
  EXPECT_EQ(run("eval --checkpoint " + (root_ / "missing").string() + " --data " + (root_ / "data").string()).code, 2);
  EXPECT_EQ(run("train --precision f16 --data " + (root_ / "data").string() + " --out " + (root_ / "x").string()).code,
            2);
  EXPECT_EQ(run("").code, 2);
}

}  // namespace
