#include "cltr/core.h"

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"

namespace cltr {
namespace {

using testing::MakeList;

TEST(ValidateDatasetTest, DuplicateDocIdNamesQuery) {
  QueryList q = MakeList("q7", {1, 0, 0});
  q.docs[2].doc_id = q.docs[0].doc_id;
  std::vector<QueryList> data = {MakeList("q1", {0, 1}), q};
  ValidationReport report = ValidateDataset(data);
  ASSERT_FALSE(report.ok());
  EXPECT_EQ(report.issues.size(), 1u);
  EXPECT_EQ(report.issues[0].query_id, "q7");
}

TEST(ValidateDatasetTest, EmptyDataset) {
  ValidationReport report = ValidateDataset({});
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.query_count, 0u);
}

TEST(ValidateDatasetTest, WellFormedTwoQueries) {
  std::vector<QueryList> data = {MakeList("a", {1, 0}), MakeList("b", {0, 1})};
  ValidationReport report = ValidateDataset(data);
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.query_count, 2u);
}

TEST(ValidateDatasetTest, ReportsEachViolation) {
  QueryList q = MakeList("q", {2, 0, 1});
  q.docs[1].features.values.push_back(0.0);
  q.docs[2].features.values[0] = std::nan("");
  std::vector<QueryList> data = {q, MakeList("long", std::vector<int>(5, 0))};
  ValidationReport report = ValidateDataset(data, 4);
  EXPECT_EQ(report.issues.size(), 4u);
}

TEST(ClickModelParamsTest, RandomInputsAcceptedIffInRange) {
  Rng rng(11);
  auto draw = [&] { return rng.Uniform() * 1.6 - 0.3; };
  auto in_unit = [](double p) { return p >= 0 && p <= 1; };
  int accepted = 0, rejected = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> v = {draw(), draw(), draw()};
    bool ok = in_unit(v[0]) && in_unit(v[1]) && in_unit(v[2]);
    try {
      DcmParams p(v);
      EXPECT_TRUE(ok);
      for (double x : p.lambda()) EXPECT_TRUE(in_unit(x));
      ++accepted;
    } catch (const std::invalid_argument&) {
      EXPECT_FALSE(ok);
      ++rejected;
    }
    try {
      CcmParams p(v[0], v[1], v[2]);
      EXPECT_TRUE(ok);
      EXPECT_TRUE(in_unit(p.alpha1()) && in_unit(p.alpha2()) &&
                  in_unit(p.alpha3()));
    } catch (const std::invalid_argument&) {
      EXPECT_FALSE(ok);
    }
    bool pbm_ok = ok && v[0] > 0 && v[1] > 0 && v[2] > 0;
    try {
      PbmParams p(v);
      EXPECT_TRUE(pbm_ok);
    } catch (const std::invalid_argument&) {
      EXPECT_FALSE(pbm_ok);
    }
    bool dbn_ok = v[0] > 0 && v[0] <= 1 && in_unit(v[1]) && in_unit(v[2]);
    try {
      DbnParams p(v[0], {{{"q", "d"}, v[1]}}, v[2]);
      EXPECT_TRUE(dbn_ok);
    } catch (const std::invalid_argument&) {
      EXPECT_FALSE(dbn_ok);
    }
  }
  EXPECT_GT(accepted, 100);
  EXPECT_GT(rejected, 100);
  EXPECT_THROW(PbmParams(std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(PbmParams(std::vector<double>{std::nan("")}),
               std::invalid_argument);
}

TEST(NoiseSpecTest, Validate) {
  NoiseSpec noise;
  EXPECT_NO_THROW(noise.Validate());
  noise.p_click_given_examined_nonrelevant = 1.5;
  EXPECT_THROW(noise.Validate(), std::invalid_argument);
}

template <typename T>
T RoundTrip(const T& value) {
  return Json::parse(Json(value).dump()).get<T>();
}

TEST(JsonRoundTripTest, RandomCoreValues) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 1 + rng.UniformIndex(20);
    std::vector<int> rel(n);
    for (int& r : rel) r = rng.Bernoulli(0.3);
    QueryList q = MakeList("q" + std::to_string(trial), rel, 4, trial);
    EXPECT_EQ(RoundTrip(q), q);
    EXPECT_EQ(RoundTrip(q.docs[0]), q.docs[0]);
    EXPECT_EQ(RoundTrip(q.docs[0].features), q.docs[0].features);

    Session s;
    s.query_id = q.query_id;
    for (size_t i = 0; i < n; ++i) s.clicks.push_back(rng.Bernoulli(0.5));
    if (trial % 2) {
      s.generator = "dcm_0.6_1.0";
      s.seed = rng.engine()();
    }
    EXPECT_EQ(RoundTrip(s), s);

    std::vector<double> v(n);
    for (double& x : v) x = rng.Uniform();
    v[0] = 1.0;
    PbmParams pbm(v);
    DcmParams dcm(v);
    CcmParams ccm(rng.Uniform(), rng.Uniform(), rng.Uniform());
    DbnParams dbn(0.5 + 0.5 * rng.Uniform(), {{{"q", "d1"}, rng.Uniform()}},
                  rng.Uniform());
    EXPECT_EQ(RoundTrip(pbm), pbm);
    EXPECT_EQ(RoundTrip(dcm), dcm);
    EXPECT_EQ(RoundTrip(ccm), ccm);
    EXPECT_EQ(RoundTrip(dbn), dbn);
    for (const ClickModelParams& p :
         std::vector<ClickModelParams>{pbm, dcm, dbn, ccm}) {
      Json j = Json::parse(ClickModelParamsToJson(p).dump());
      EXPECT_EQ(ClickModelParamsFromJson(j), p);
    }

    PropensityVector prop{v, std::vector<uint8_t>(n, 0)};
    prop.clipped[0] = 1;
    EXPECT_EQ(RoundTrip(prop), prop);
    NoiseSpec noise{rng.Uniform(), rng.Uniform()};
    EXPECT_EQ(RoundTrip(noise), noise);
  }
}

TEST(ClickModelParamsTest, NamesAndCascadeFlag) {
  EXPECT_EQ(ModelName(PbmParams()), "pbm");
  EXPECT_EQ(ModelName(DbnParams()), "dbn");
  EXPECT_FALSE(IsCascade(PbmParams()));
  EXPECT_TRUE(IsCascade(CcmParams()));
  EXPECT_THROW(ClickModelParamsFromJson(Json{{"model", "ubm"}}),
               std::exception);
}

TEST(ClickLogTest, IndexAndSplit) {
  std::vector<Session> sessions;
  for (int i = 0; i < 25; ++i) {
    sessions.push_back({"q" + std::to_string(i % 3), {1, 0, uint8_t(i % 2)}});
  }
  ClickLog log(sessions);
  EXPECT_EQ(log.Count("q0"), 9u);
  EXPECT_EQ(log.Count("missing"), 0u);
  EXPECT_EQ(log.TotalClicks(), 25 + 12);
  auto [kept, held_out] = log.Split(10, 0);
  EXPECT_EQ(held_out.size(), 3u);
  EXPECT_EQ(kept.size(), 22u);
  EXPECT_EQ(held_out.sessions()[1], sessions[10]);
}

TEST(ClickLogTest, FileRoundTripAndParseErrors) {
  testing::TempDir dir("clicklog");
  ClickLog log({{"q1", {0, 1}, "pbm_1.0", 42}, {"q2", {1, 1, 0}}});
  WriteClickLog(dir.File("log.jsonl"), log);
  EXPECT_EQ(ReadClickLog(dir.File("log.jsonl")), log);

  testing::WriteFile(dir.File("bad.jsonl"),
                     "{\"qid\": \"a\", \"clicks\": [1]}\n\n{\"qid\": 3}\n");
  try {
    ReadClickLog(dir.File("bad.jsonl"));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  testing::WriteFile(dir.File("bad2.jsonl"),
                     "{\"qid\": \"a\", \"clicks\": [2]}\n");
  EXPECT_THROW(ReadClickLog(dir.File("bad2.jsonl")), ParseError);
  EXPECT_THROW(ReadClickLog(dir.File("missing.jsonl")), std::runtime_error);
}

}  // namespace
}  // namespace cltr
