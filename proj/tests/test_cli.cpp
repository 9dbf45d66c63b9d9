#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = CYCLECOUNT_CLI;
const std::string kData = CYCLECOUNT_DATA_DIR;

int run(const std::string& args) {
  const int rc = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cyclecount_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string p(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SubcommandChain) {
  ASSERT_EQ(run("simulate --config " + kData + "/synth_small.json --seed 5 --out " + p("raw.csv")), 0);
  ASSERT_EQ(run("cleanse --in " + p("raw.csv") + " --out " + p("clean.csv") + " --report " + p("cleanse.json")), 0);
  ASSERT_EQ(run("score --in " + p("clean.csv") + " --out " + p("scored.csv")), 0);
  ASSERT_EQ(run("bin --in " + p("scored.csv") + " --out " + p("counts.csv")), 0);
  EXPECT_TRUE(fs::exists(p("counts.csv.rates.csv")));
  ASSERT_EQ(run("fit --counts " + p("counts.csv") + " --kw 1 --kd 2 --out " + p("base.json")), 0);
  ASSERT_EQ(run("fit --counts " + p("counts.csv") + " --kw 1 --kd 2 --interaction --out " + p("ext.json")), 0);
  ASSERT_EQ(run("compare --model-a " + p("base.json") + " --model-b " + p("ext.json") + " --out " + p("anova.json")), 0);
  ASSERT_EQ(run("complexity --in " + p("scored.csv") + " --by gp_hours --measures admitted,los --out " + p("cx.json")), 0);

  const auto anova = nlohmann::json::parse(slurp(p("anova.json")));
  EXPECT_LT(anova.at("p").get<double>(), 0.05);
  const auto cleanse = nlohmann::json::parse(slurp(p("cleanse.json")));
  EXPECT_GT(cleanse.at("retained_count").get<int>(), 0);
  const auto cx = nlohmann::json::parse(slurp(p("cx.json")));
  EXPECT_EQ(cx.size(), 2u);
}

TEST_F(Cli, RunIsByteDeterministic) {
  ASSERT_EQ(run("simulate --config " + kData + "/synth_small.json --out " + p("raw.csv")), 0);
  ASSERT_EQ(run("run --in " + p("raw.csv") + " --config " + kData + "/pipeline_config.json --out-dir " + p("a")), 0);
  ASSERT_EQ(run("run --in " + p("raw.csv") + " --config " + kData + "/pipeline_config.json --out-dir " + p("b") + " --svg"), 0);
  EXPECT_FALSE(fs::exists(p("a/rates.svg")));
  EXPECT_TRUE(fs::exists(p("b/rates.svg")));
  std::size_t csv = 0;
  for (const auto& e : fs::directory_iterator(p("a"))) {
    const auto name = e.path().filename().string();
    if (name == "report.json") {
      auto ja = nlohmann::json::parse(slurp(e.path())), jb = nlohmann::json::parse(slurp(p("b/report.json")));
      EXPECT_TRUE(ja.at("metadata").contains("generated_at"));
      ja.erase("metadata");
      jb.erase("metadata");
      EXPECT_EQ(ja.dump(), jb.dump());
    } else {
      ++csv;
      EXPECT_EQ(slurp(e.path()), slurp(p("b/" + name))) << name;
    }
  }
  EXPECT_GE(csv, 7u);
}

TEST_F(Cli, ErrorsGiveNonZeroExit) {
  EXPECT_NE(run("cleanse --in " + p("missing.csv") + " --out " + p("x.csv")), 0);
  EXPECT_NE(run("fit --counts " + p("missing.csv")), 0);
  EXPECT_NE(run("frobnicate"), 0);
  std::ofstream(p("empty.csv")) << "visit_id,arrival,departure,age,icd_admission,icd_discharge,mts,admitted\n";
  EXPECT_EQ(run("run --in " + p("empty.csv") + " --out-dir " + p("out")), 3);
  EXPECT_FALSE(fs::exists(p("out/report.json")));
}
