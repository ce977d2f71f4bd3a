#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lockin-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Exit status of `lockin <args>`; stdout and stderr land in out.txt / err.txt.
  int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" LOCKIN_CLI "' " + args + " >out.txt 2>err.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream(dir_ / name, std::ios::binary) << content;
  }

  fs::path dir_;
};

const std::string kGemma = "-i '" + fixture("gemma_2b.jsonl") + "' -m '" + fixture("manifest.json") + "'";

}  // namespace

TEST_F(Cli, ValidateExitCodes) {
  EXPECT_EQ(run("validate '" + fixture("gemma_2b.jsonl") + "'"), 0);
  write("empty.jsonl", "");
  EXPECT_EQ(run("validate empty.jsonl"), 3);
  write("bad.jsonl", "{\"run_id\":\"x\",\"step\":0}\n{\"run_id\":\"x\",\"step\":0}\nnot json\n");
  EXPECT_EQ(run("validate bad.jsonl"), 2);
  const auto err = slurp("err.txt");
  EXPECT_NE(err.find("line 2"), std::string::npos);
  EXPECT_NE(err.find("line 3"), std::string::npos);
}

TEST_F(Cli, ComputeGemmaRowAndEmptyInput) {
  ASSERT_EQ(run("compute " + kGemma + " --n-perm 2000 -o report.json"), 0);
  EXPECT_EQ(slurp("report.csv"),
            "Model,# Ckpts,Mean ARC (%),Δ ARC (pp),ρ(ARC, cos),ρ(ARC, RE)\n"
            "Gemma-2-2B-IT,18,73.04,-0.33,-0.157,0.760\n");
  const auto report = json::parse(slurp("report.json"));
  EXPECT_EQ(report["schema"], "lockin-report/1");
  EXPECT_EQ(report["config"]["analysis"]["n_perm"], 2000);
  EXPECT_FALSE(fs::exists(dir_ / "report.json.tmp"));

  write("empty.jsonl", "\n\n");
  EXPECT_EQ(run("compute -i empty.jsonl -o x.json"), 3);
  EXPECT_EQ(run("compute -i missing.jsonl -o x.json"), 2);
}

TEST_F(Cli, ConfigPrecedence) {
  write("cfg.json", "{\"analysis\": {\"n_perm\": 300, \"seed\": 9}}");
  ASSERT_EQ(run("compute " + kGemma + " -o a.json", "LOCKIN_CONFIG=cfg.json"), 0);
  auto cfg = json::parse(slurp("a.json"))["config"]["analysis"];
  EXPECT_EQ(cfg["n_perm"], 300);
  EXPECT_EQ(cfg["seed"], 9);
  ASSERT_EQ(run("compute " + kGemma + " -o b.json --seed 4", "LOCKIN_CONFIG=cfg.json"), 0);
  cfg = json::parse(slurp("b.json"))["config"]["analysis"];
  EXPECT_EQ(cfg["n_perm"], 300);
  EXPECT_EQ(cfg["seed"], 4);

  write("bad.json", "{\"analysis\": {\"n_prem\": 3}}");
  EXPECT_EQ(run("compute " + kGemma + " -o c.json -c bad.json"), 2);
  EXPECT_NE(slurp("err.txt").find("n_prem"), std::string::npos);
}

TEST_F(Cli, UnknownScenarioOrFlagIsUsageError) {
  EXPECT_EQ(run("simulate --scenario bogus -o s.jsonl"), 2);
  EXPECT_NE(slurp("err.txt").find("Usage"), std::string::npos);
  EXPECT_EQ(run("compute " + kGemma + " -o r.json --no-such-flag"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(Cli, NullDriftPredictFailsP2) {
  ASSERT_EQ(run("simulate --scenario null_drift --seed 7 -o run.jsonl"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "run.truth.json"));
  ASSERT_EQ(run("predict -i run.jsonl --n-perm 500 -o pred.json"), 0);
  const auto verdicts = json::parse(slurp("pred.json"))["runs"][0]["predictions"];
  ASSERT_EQ(verdicts.size(), 5u);
  EXPECT_EQ(verdicts[1]["id"], "P2");
  EXPECT_EQ(verdicts[1]["outcome"], "fail");
}

TEST_F(Cli, CostFreeDetectRecoversOnset) {
  ASSERT_EQ(run("simulate --scenario cost_free --seed 1 -o run.jsonl --truth truth.json"), 0);
  ASSERT_EQ(run("detect -i run.jsonl -o det.json"), 0);
  const auto truth = json::parse(slurp("truth.json"));
  const auto det = json::parse(slurp("det.json"));
  bool found = false;
  for (const auto& cp : det["runs"][0]["changepoints"]) {
    if (cp["series"] != "refusal_elasticity") continue;
    found = true;
    EXPECT_TRUE(cp["supported"].get<bool>());
    const auto step = cp["breakpoints"][0].get<std::int64_t>();
    EXPECT_LE(std::abs(step - truth["onset_step"].get<std::int64_t>()), truth["step_interval"].get<std::int64_t>());
  }
  EXPECT_TRUE(found);
}

TEST_F(Cli, QuantizationGovernRollback) {
  ASSERT_EQ(run("govern -i '" + fixture("quantization_stress.jsonl") + "' -o gov.json"), 0);
  const auto gov = json::parse(slurp("gov.json"))["runs"][0];
  bool rollback = false;
  for (const auto& a : gov["alerts"]) {
    for (const auto& act : a["actions"]) rollback |= act == "rollback_checkpoint";
  }
  EXPECT_TRUE(rollback);
  EXPECT_FALSE(gov["instabilities"].empty());
}

TEST_F(Cli, StrictPredictExitsFourOnInsufficiency) {
  ASSERT_EQ(run("predict " + kGemma + " --n-perm 200 -o p.json"), 0);
  EXPECT_EQ(run("predict " + kGemma + " --n-perm 200 -o p.json --strict"), 4);
}

TEST_F(Cli, CommandsAreByteIdenticalOnRerun) {
  for (int i = 0; i < 2; ++i) {
    const std::string k = std::to_string(i);
    ASSERT_EQ(run("simulate --scenario uplift --seed 3 --noise-sd 0.02 --moe -o s" + k + ".jsonl"), 0);
    ASSERT_EQ(run("compute -i s0.jsonl --n-perm 500 -o c" + k + ".json"), 0);
    ASSERT_EQ(run("predict -i s0.jsonl --n-perm 500 -o p" + k + ".json"), 0);
  }
  EXPECT_EQ(slurp("s0.jsonl"), slurp("s1.jsonl"));
  EXPECT_EQ(slurp("s0.truth.json"), slurp("s1.truth.json"));
  EXPECT_EQ(slurp("c0.json"), slurp("c1.json"));
  EXPECT_EQ(slurp("c0.csv"), slurp("c1.csv"));
  EXPECT_EQ(slurp("p0.json"), slurp("p1.json"));
}

TEST_F(Cli, PlotFromRunReportAndGrid) {
  ASSERT_EQ(run("plot " + kGemma + " -o figs"), 0);
  const auto svg = slurp("figs/gemma-2-2b-it.svg");
  EXPECT_NE(svg.find("class=\"masked\""), std::string::npos);
  ASSERT_EQ(run("compute " + kGemma + " --n-perm 100 -o rep.json"), 0);
  ASSERT_EQ(run("plot -i rep.json -o from_report"), 0);
  EXPECT_EQ(slurp("from_report/gemma-2-2b-it.svg"), svg);

  std::string merged;
  for (const char* sc : {"cost_free", "volatile_synergy", "uplift", "quantization_stress"}) {
    ASSERT_EQ(run(std::string("simulate --scenario ") + sc + " -o " + sc + ".jsonl"), 0);
    merged += slurp(std::string(sc) + ".jsonl");
  }
  write("all.jsonl", merged);
  ASSERT_EQ(run("plot -i all.jsonl -o grid --grid"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "grid" / "grid.svg"));
  EXPECT_EQ(fs::directory_iterator(dir_ / "grid")->path().filename(), "grid.svg");
}
