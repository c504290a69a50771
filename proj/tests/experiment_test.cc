#include "cltr/experiment.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.h"

namespace cltr {
namespace {

namespace fs = std::filesystem;

TEST(SimSettingTest, LabelsRoundTrip) {
  for (const char* label :
       {"pbm_0.5", "pbm_2.0", "dcm_0.6_0.5", "dcm_1.0_1.0", "ccm_0.9_0.4_0.7",
        "dbn_0.9_0.7_0.1"}) {
    EXPECT_EQ(ParseSimSetting(label).Label(), label);
  }
  EXPECT_EQ(FormatParam(1), "1.0");
  EXPECT_EQ(FormatParam(0.25), "0.25");
  SimSetting dcm = ParseSimSetting("dcm_0.6_1.0");
  EXPECT_EQ(std::get<DcmParams>(dcm.Params(20)), DcmParams::FromSchedule(0.6, 1.0, 20));
  for (const char* bad : {"ubm_1.0", "pbm", "dcm_0.6", "pbm_x", "ccm_1_1"}) {
    EXPECT_THROW(ParseSimSetting(bad), SpecError) << bad;
  }
}

TEST(MethodTest, Names) {
  for (Method m : {Method::kNoIps, Method::kPbmOracle, Method::kPbmDla,
                   Method::kCmOracle, Method::kCmMle}) {
    EXPECT_EQ(ParseMethod(MethodName(m)), m);
  }
  EXPECT_EQ(ParseMethod("cm-ips"), Method::kCmOracle);
  EXPECT_THROW(ParseMethod("dr"), SpecError);
}

TEST(ExperimentSpecTest, DefaultsAndErrors) {
  ExperimentSpec def = DefaultExperimentSpec();
  EXPECT_EQ(def.sims.size(), 9u);
  EXPECT_EQ(def.repeats, 15);
  EXPECT_EQ(def.clicks, 200000);
  EXPECT_NO_THROW(def.Validate());

  ExperimentSpec parsed = ParseExperimentSpec(Json::parse(R"({
      "sims": ["pbm_1.0"], "methods": ["no-ips", "cm-ips-mle"],
      "repeats": 3, "clicks": 1000, "train": {"steps": 10, "lr": 0.1},
      "selection": ["exp-minmax"]})"));
  EXPECT_EQ(parsed.repeats, 3);
  EXPECT_EQ(parsed.methods[1], Method::kCmMle);
  EXPECT_EQ(parsed.train.steps, 10);
  EXPECT_EQ(parsed.selection.size(), 1u);
  ExperimentSpec again = ParseExperimentSpec(ExperimentSpecToJson(parsed));
  EXPECT_EQ(ExperimentSpecToJson(again), ExperimentSpecToJson(parsed));

  for (const char* bad : {R"({"repeats": 0})", R"({"sims": ["xyz_1"]})",
                          R"({"methods": ["magic"]})", R"({"sims": []})",
                          R"({"selection": ["tanh"]})", R"({"noise": 2.0})",
                          R"({"sims": ["pbm_1.0", "pbm_1.0"]})"}) {
    EXPECT_THROW(ParseExperimentSpec(Json::parse(bad)), SpecError) << bad;
  }
  testing::TempDir dir("spec");
  testing::WriteFile(dir.File("s.json"), "{not json");
  EXPECT_THROW(LoadExperimentSpec(dir.File("s.json")), SpecError);
  EXPECT_THROW(LoadExperimentSpec(dir.File("missing.json")), SpecError);
}

ExperimentSpec TinySpec() {
  ExperimentSpec spec;
  SyntheticConfig sc;
  sc.n_queries = 120;
  sc.docs_per_query = 25;
  sc.feature_dim = 6;
  spec.dataset.synthetic = sc;
  spec.dataset.init_sample = 20;
  spec.sims = {"dcm_0.6_1.0"};
  spec.methods = {Method::kNoIps, Method::kCmOracle};
  spec.repeats = 2;
  spec.clicks = 2000;
  spec.seed = 5;
  spec.train.steps = 200;
  spec.train.learning_rate = 0.05;
  spec.selection = {NormalizerKind::kExpMinMax};
  return spec;
}

std::vector<std::string> CsvRows(const std::string& path) {
  std::istringstream in(testing::ReadFile(path));
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

class RunExperimentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("experiment");
    result_ = new ExperimentResult(
        RunExperiment(TinySpec(), dir_->File("run"), RunOptions{false, 1}));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete dir_;
  }
  static testing::TempDir* dir_;
  static ExperimentResult* result_;
};
testing::TempDir* RunExperimentTest::dir_ = nullptr;
ExperimentResult* RunExperimentTest::result_ = nullptr;

TEST_F(RunExperimentTest, MatrixShape) {
  EXPECT_TRUE(result_->AllOk());
  EXPECT_EQ(result_->cells.size(), 4u);
  EXPECT_EQ(result_->skyline.size(), 2u);
  EXPECT_EQ(result_->selection.size(), 2u);
  for (const CellResult& c : result_->cells) {
    EXPECT_GT(c.ndcg10, 0.0);
    EXPECT_LE(c.ndcg10, 1.0);
    EXPECT_FALSE(c.per_query.empty());
  }
  EXPECT_EQ(result_->Values("dcm_0.6_1.0", "cm-ips-oracle").size(), 2u);
  EXPECT_TRUE(fs::exists(dir_->File("run/cells/skyline__r1.json")));
  EXPECT_TRUE(fs::exists(dir_->File("run/selection/dcm_0.6_1.0__r0.json")));
}

TEST_F(RunExperimentTest, RerunIsIdentical) {
  ExperimentResult again =
      RunExperiment(TinySpec(), dir_->File("rerun"), RunOptions{false, 2});
  for (const char* f : {"results.csv", "skyline.csv", "summary.json"}) {
    EXPECT_EQ(testing::ReadFile(dir_->File(std::string("run/") + f)),
              testing::ReadFile(dir_->File(std::string("rerun/") + f)))
        << f;
  }
}

TEST_F(RunExperimentTest, CsvAndSummaryAgree) {
  std::vector<std::string> rows = CsvRows(dir_->File("run/results.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "sim,method,repeat,ndcg10");
  std::map<std::string, std::vector<double>> by_method;
  for (size_t i = 1; i < rows.size(); ++i) {
    std::istringstream line(rows[i]);
    std::string sim, method, repeat, value;
    std::getline(line, sim, ',');
    std::getline(line, method, ',');
    std::getline(line, repeat, ',');
    std::getline(line, value, ',');
    by_method[method].push_back(std::stod(value));
  }
  Json summary = Json::parse(testing::ReadFile(dir_->File("run/summary.json")));
  for (const auto& [method, values] : by_method) {
    double mean = (values[0] + values[1]) / 2;
    const Json& m = summary["sims"]["dcm_0.6_1.0"]["methods"][method];
    EXPECT_DOUBLE_EQ(m["mean"].get<double>(), mean) << method;
    EXPECT_EQ(m["n"].get<int>(), 2);
  }
  const Json& p = summary["sims"]["dcm_0.6_1.0"]["p_values"];
  EXPECT_EQ(p["no-ips"]["cm-ips-oracle"], p["cm-ips-oracle"]["no-ips"]);
}

TEST_F(RunExperimentTest, ManifestAndLoad) {
  EXPECT_TRUE(VerifyManifest(dir_->File("run")).empty());
  ExperimentResult loaded = LoadResults(dir_->File("run"));
  ASSERT_EQ(loaded.cells.size(), result_->cells.size());
  for (const char* m : {"no-ips", "cm-ips-oracle"}) {
    EXPECT_EQ(loaded.Values("dcm_0.6_1.0", m), result_->Values("dcm_0.6_1.0", m));
  }
  EmitResults(dir_->File("run"), loaded);
  EXPECT_TRUE(VerifyManifest(dir_->File("run")).empty());

  testing::TempDir copy("manifest");
  fs::copy(dir_->path() / "run", copy.path() / "run", fs::copy_options::recursive);
  std::ofstream(copy.File("run/results.csv"), std::ios::app) << "tampered\n";
  fs::remove(copy.File("run/cells/skyline__r0.json"));
  EXPECT_EQ(VerifyManifest(copy.File("run")).size(), 2u);
}

TEST_F(RunExperimentTest, DeletedCellIsReproducedBitIdentically) {
  testing::TempDir copy("independence");
  fs::copy(dir_->path() / "run", copy.path() / "run", fs::copy_options::recursive);
  const std::string cell = "run/cells/dcm_0.6_1.0__cm-ips-oracle__r1.json";
  const std::string before = testing::ReadFile(copy.File(cell));
  fs::remove(copy.File(cell));
  RunExperiment(TinySpec(), copy.File("run"), RunOptions{true, 1});
  EXPECT_EQ(testing::ReadFile(copy.File(cell)), before);
  EXPECT_EQ(testing::ReadFile(copy.File("run/results.csv")),
            testing::ReadFile(dir_->File("run/results.csv")));
}

TEST(EmitResultsTest, FailedCellsAreSkipped) {
  ExperimentResult r;
  for (int rep = 0; rep < 3; ++rep) {
    r.cells.push_back({"pbm_1.0", "no-ips", rep, true, 0.5 + 0.01 * rep, "", {}, {}});
    r.cells.push_back({"pbm_1.0", "pbm-ips-oracle", rep, rep != 1, 0.7, rep == 1 ? "boom" : "", {}, {}});
    r.skyline.push_back({"skyline", "full-info", rep, true, 0.8, "", {}, {}});
  }
  EXPECT_FALSE(r.AllOk());
  EXPECT_EQ(r.Values("pbm_1.0", "pbm-ips-oracle").size(), 2u);
  Json s = SummarizeResults(r);
  EXPECT_EQ(s["sims"]["pbm_1.0"]["methods"]["pbm-ips-oracle"]["n"], 2);
  EXPECT_NEAR(s["sims"]["pbm_1.0"]["methods"]["no-ips"]["mean"].get<double>(), 0.51, 1e-12);
  EXPECT_EQ(s["failed_cells"], 1);
  testing::TempDir dir("emit");
  WriteResultsCsv(dir.File("r.csv"), r);
  EXPECT_EQ(CsvRows(dir.File("r.csv")).size(), 6u);
}

TEST(Sha256Test, KnownDigest) {
  testing::TempDir dir("sha");
  testing::WriteFile(dir.File("abc"), "abc");
  EXPECT_EQ(Sha256File(dir.File("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace cltr
