#include "cltr/propensity.h"

#include <cmath>

#include <gtest/gtest.h>

#include "cltr/clicksim.h"
#include "test_util.h"

namespace cltr {
namespace {

using testing::MakeList;

std::vector<uint8_t> Clicks(std::initializer_list<int> c) {
  return std::vector<uint8_t>(c.begin(), c.end());
}

TEST(PbmPropensityTest, ScheduleValues) {
  std::vector<double> eta1 = PbmThetaSchedule(1.0, 5);
  EXPECT_DOUBLE_EQ(PbmPropensity(eta1, 5).values[2], 1.0 / 3);
  EXPECT_EQ(PbmPropensity(eta1, 5).values[0], 1.0);
  EXPECT_DOUBLE_EQ(PbmPropensity(PbmThetaSchedule(2.0, 5), 5).values[3], 0.0625);
  EXPECT_EQ(PbmPropensity(eta1, 3).size(), 3u);
  EXPECT_THROW(PbmPropensity(eta1, 6), std::invalid_argument);
}

TEST(DcmPropensityTest, Examples) {
  for (double v : DcmPropensity(std::vector<double>(4, 0.3), Clicks({0, 0, 0, 0})).values) {
    EXPECT_EQ(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(DcmPropensity(std::vector<double>{0.6, 0.5}, Clicks({1, 0})).values[1], 0.6);
  std::vector<double> lambda = {0.6, 0.6 / std::sqrt(2.0), 0.5};
  EXPECT_NEAR(DcmPropensity(lambda, Clicks({1, 1, 0})).values[2], 0.25456, 1e-5);
}

TEST(DbnPropensityTest, Examples) {
  std::vector<double> s = {0.5, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(DbnPropensity(0.9, s, Clicks({0, 0, 0})).values[2], 0.81);
  EXPECT_DOUBLE_EQ(DbnPropensity(0.9, s, Clicks({1, 0, 0})).values[1], 0.45);
  PropensityVector zero = DbnPropensity(1.0, std::vector<double>{1.0, 0.0}, Clicks({1, 0}));
  EXPECT_EQ(zero.values[1], 0.0);
  PropensityVector clipped = ClipPropensity(zero, ClippingPolicy{});
  EXPECT_DOUBLE_EQ(clipped.values[1], 0.01);
  EXPECT_EQ(clipped.clipped, Clicks({0, 1}));
  EXPECT_DOUBLE_EQ(IpsWeights(zero, Clicks({0, 1}), ClippingPolicy{})[1], 100.0);
}

TEST(CcmPropensityTest, Examples) {
  std::vector<double> r = {1, 0, 0};
  EXPECT_DOUBLE_EQ(CcmPropensity(0.9, 0.5, 0.5, r, Clicks({0, 0, 0})).values[2], 0.81);
  EXPECT_DOUBLE_EQ(CcmPropensity(1.0, 0.2, 0.8, r, Clicks({1, 0, 0})).values[1], 0.8);
}

TEST(CcmPropensityTest, ReducesToDcmWithConstantLambda) {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 1 + rng.UniformIndex(20);
    double lambda = rng.Uniform();
    std::vector<uint8_t> clicks(n);
    std::vector<double> rel(n);
    for (size_t j = 0; j < n; ++j) {
      clicks[j] = rng.Bernoulli(0.4);
      rel[j] = rng.Uniform();
    }
    PropensityVector ccm = CcmPropensity(1.0, lambda, lambda, rel, clicks);
    PropensityVector dcm = DcmPropensity(std::vector<double>(n, lambda), clicks);
    for (size_t j = 0; j < n; ++j) EXPECT_NEAR(ccm.values[j], dcm.values[j], 1e-12);
  }
}

TEST(CascadePropensityTest, PrefixMonotoneAndClickFreeNeutral) {
  Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t n = 12;
    std::vector<uint8_t> clicks(n);
    std::vector<double> lambda(n), s(n), rel(n);
    for (size_t j = 0; j < n; ++j) {
      clicks[j] = rng.Bernoulli(0.3);
      lambda[j] = rng.Uniform();
      s[j] = rng.Uniform();
      rel[j] = rng.Uniform();
    }
    double a1 = rng.Uniform(), a2 = rng.Uniform(), a3 = rng.Uniform();
    for (const PropensityVector& p :
         {DcmPropensity(lambda, clicks), DbnPropensity(0.5 + 0.5 * rng.Uniform(), s, clicks),
          CcmPropensity(a1, a2, a3, rel, clicks)}) {
      EXPECT_EQ(p.values[0], 1.0);
      for (size_t j = 1; j < n; ++j) EXPECT_LE(p.values[j], p.values[j - 1]);
    }
    std::vector<uint8_t> none(n, 0);
    for (double v : DcmPropensity(lambda, none).values) EXPECT_EQ(v, 1.0);
    for (double v : CcmPropensity(1.0, a2, a3, rel, none).values) EXPECT_EQ(v, 1.0);
  }
}

TEST(IpsWeightsTest, Examples) {
  ClippingPolicy policy;
  PropensityVector p{{1.0, 0.001, 0.5}, {0, 0, 0}};
  std::vector<double> w = IpsWeights(p, Clicks({1, 1, 0}), policy);
  EXPECT_EQ(w, (std::vector<double>{1.0, 100.0, 0.0}));
  EXPECT_THROW(IpsWeights(p, Clicks({1, 1}), policy), std::invalid_argument);
  EXPECT_THROW(ClippingPolicy{0.5}.Validate(), std::invalid_argument);
}

TEST(IpsWeightsTest, NeverAboveCap) {
  Rng rng(33);
  for (int trial = 0; trial < 2000; ++trial) {
    size_t n = 1 + rng.UniformIndex(20);
    PropensityVector p;
    std::vector<uint8_t> clicks(n);
    for (size_t j = 0; j < n; ++j) {
      p.values.push_back(std::pow(rng.Uniform(), 4));
      clicks[j] = rng.Bernoulli(0.5);
    }
    ClippingPolicy policy{1.0 + 199.0 * rng.Uniform()};
    for (double w : IpsWeights(p, clicks, policy)) EXPECT_LE(w, policy.max_weight);
    for (double w : IpsWeights(ClipPropensity(p, policy), clicks, policy)) {
      EXPECT_LE(w, policy.max_weight * (1 + 1e-15));
    }
  }
}

TEST(RelevanceEstimateTest, LookupAndRange) {
  RelevanceEstimate est;
  est.Set("q", "a", 0.3);
  EXPECT_EQ(est.Get("q", "a"), 0.3);
  EXPECT_THROW(est.Get("q", "b"), std::out_of_range);
  EXPECT_THROW(est.Set("q", "b", 1.5), std::invalid_argument);
  QueryList q = MakeList("q", {1});
  q.docs[0].doc_id = "a";
  EXPECT_EQ(est.ForList(q), (std::vector<double>{0.3}));
}

TEST(SessionPropensityTest, Dispatch) {
  QueryList q = MakeList("q", {1, 0, 1});
  std::vector<uint8_t> c = Clicks({1, 0, 0});
  EXPECT_DOUBLE_EQ(SessionPropensity(DcmParams({0.4, 1, 1}), q, c).values[1], 0.4);
  DbnParams dbn(0.9, {{{"q", "d0"}, 0.5}}, 0.0);
  EXPECT_DOUBLE_EQ(SessionPropensity(dbn, q, c).values[1], 0.45);
  std::vector<double> r = {1, 0, 1};
  EXPECT_DOUBLE_EQ(SessionPropensity(CcmParams(1, 0.2, 0.7), q, c, r).values[1], 0.7);
  EXPECT_DOUBLE_EQ(SessionPropensity(PbmParams({1, 0.3, 0.2}), q, c).values[1], 0.3);
  EXPECT_THROW(SessionPropensity(PbmParams({1, 0.3, 0.2}), q, Clicks({1})),
               std::invalid_argument);
}

// Exact marginal examination values from an independent enumeration.
TEST(MarginalExaminationTest, FrozenValues) {
  NoiseSpec noise;
  QueryList q = MakeList("q", {1, 0, 1, 1});
  std::vector<double> dcm = MarginalExamination(DcmParams({0.6, 0.3, 0.2, 0.1}), q, noise);
  std::vector<double> want = {1.0, 0.6, 0.579, 0.1158};
  for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(dcm[j], want[j], 1e-12);

  QueryList r = MakeList("q", {1, 0, 1, 0});
  std::vector<double> ccm = MarginalExamination(CcmParams(0.9, 0.4, 0.7), r, noise);
  want = {1.0, 0.7, 0.6125, 0.42875};
  for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(ccm[j], want[j], 1e-12);

  DbnParams dbn(0.9, {{{"q", "d0"}, 0.7}, {{"q", "d2"}, 0.7}}, 0.1);
  std::vector<double> d = MarginalExamination(dbn, r, noise);
  want = {1.0, 0.27, 0.241785, 0.06528195};
  for (size_t j = 0; j < 4; ++j) EXPECT_NEAR(d[j], want[j], 1e-12);
}

// The marginal is the session-conditional value averaged over click prefixes,
// each weighted by its probability when every rank above j is examined.
TEST(MarginalExaminationTest, MatchesPrefixEnumeration) {
  Rng rng(34);
  NoiseSpec noise;
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 8;
    std::vector<int> rel(n);
    for (int& x : rel) x = rng.Bernoulli(0.4);
    QueryList q = MakeList("q", rel);
    std::vector<double> lambda(n), s(n);
    DbnParams::SatisfactionMap map;
    for (size_t j = 0; j < n; ++j) {
      lambda[j] = rng.Uniform();
      s[j] = rng.Uniform();
      map[{"q", q.docs[j].doc_id}] = s[j];
    }
    double a1 = rng.Uniform(), a2 = rng.Uniform(), a3 = rng.Uniform();
    std::vector<double> rd(rel.begin(), rel.end());
    std::vector<ClickModelParams> models = {DcmParams(lambda), DbnParams(0.8, map, 0.0),
                                            CcmParams(a1, a2, a3)};
    for (const ClickModelParams& m : models) {
      std::vector<double> marginal = MarginalExamination(m, q, noise);
      for (size_t j = 0; j < n; ++j) {
        double total = 0.0;
        for (uint32_t mask = 0; mask < (1u << j); ++mask) {
          std::vector<uint8_t> c(n, 0);
          for (size_t i = 0; i < j; ++i) c[i] = (mask >> i) & 1;
          PropensityVector e = SessionPropensity(m, q, c, rd);
          double prob = 1.0;
          for (size_t i = 0; i < j; ++i) {
            double pc = noise.ClickProbability(rel[i]);
            prob *= c[i] ? pc : 1.0 - pc;
          }
          total += prob * e.values[j];
        }
        EXPECT_NEAR(marginal[j], total, 1e-12) << ModelName(m) << " rank " << j;
      }
    }
  }
}

TEST(MarginalPbmThetaTest, PbmIsIdentityAndCascadeAverages) {
  std::vector<QueryList> lists = {MakeList("a", {1, 0, 1}), MakeList("b", {0, 1})};
  PbmParams pbm({1.0, 0.5, 0.2});
  EXPECT_EQ(MarginalPbmTheta(pbm, lists, NoiseSpec{}), pbm);
  DcmParams dcm({0.5, 0.5, 0.5});
  PbmParams theta = MarginalPbmTheta(dcm, lists, NoiseSpec{});
  double a = MarginalExamination(dcm, lists[0], NoiseSpec{})[1];
  double b = MarginalExamination(dcm, lists[1], NoiseSpec{})[1];
  EXPECT_DOUBLE_EQ(theta.theta()[1], (a + b) / 2);
  EXPECT_DOUBLE_EQ(theta.theta()[2], MarginalExamination(dcm, lists[0], NoiseSpec{})[2]);
}

TEST(MleDcmLambdaTest, DefinitionExamples) {
  ClickLog always_more({{"q", Clicks({1, 0, 1})}, {"q", Clicks({1, 1, 0})}});
  LambdaEstimate a = MleDcmLambda(always_more, 3);
  EXPECT_EQ(a.lambda[0], 1.0);
  EXPECT_EQ(a.support[0], 2);

  ClickLog always_last({{"q", Clicks({1, 0, 0})}, {"q", Clicks({1, 0, 0})}});
  LambdaEstimate b = MleDcmLambda(always_last, 3);
  EXPECT_EQ(b.lambda[0], 0.0);
  // Ranks 2 and 3 never clicked: carried forward and flagged.
  EXPECT_EQ(b.lambda[1], 0.0);
  EXPECT_EQ(b.lambda[2], 0.0);
  EXPECT_EQ(b.imputed, Clicks({0, 1, 1}));

  LambdaEstimate c = MleDcmLambda(ClickLog({{"q", Clicks({0, 1})}}), 2, 0.7);
  EXPECT_EQ(c.lambda[0], 0.7);
  EXPECT_EQ(c.imputed[0], 1);
}

TEST(MleDcmLambdaTest, RecoversFirstRankLambda) {
  PreparedDataset data = testing::SmallPrepared(400, 5);
  SimulatorConfig cfg;
  cfg.params = DcmParams::FromSchedule(0.6, 1.0, 20);
  cfg.seed = 77;
  cfg.keep_empty_sessions = true;
  cfg.target_clicks = 1;
  cfg.max_sessions = 100000;
  // Exactly 10^5 sessions: simulate them directly from the per-session streams.
  std::vector<Session> sessions;
  for (uint64_t i = 0; i < 100000; ++i) {
    Rng rng(DeriveSeed(cfg.seed, i));
    const QueryList& q = data.train()[rng.UniformIndex(data.train().size())];
    sessions.push_back(SimulateSession(q, cfg, rng));
  }
  LambdaEstimate est = MleDcmLambda(ClickLog(std::move(sessions)), 20);
  EXPECT_NEAR(est.lambda[0], 0.6, 0.05);
}

class DlaTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SyntheticConfig sc;
    RawDataset raw = SplitTrainTest(GenerateSynthetic(sc), 0.25, 7);
    data_ = new PreparedDataset(Prepare(raw, TrainInitialRanker(raw.train, 50, 7), 20));
  }
  static void TearDownTestSuite() { delete data_; }
  static PreparedDataset* data_;
};
PreparedDataset* DlaTest::data_ = nullptr;

TEST_F(DlaTest, RecoversReciprocalSchedule) {
  SimulatorConfig cfg;
  cfg.params = PbmParams::FromSchedule(1.0, 20);
  cfg.seed = 11;
  cfg.target_clicks = 200000;
  ThetaEstimate est = EstimatePbmDla(SimulateLog(*data_, cfg), *data_, DlaConfig{});
  EXPECT_EQ(est.theta[0], 1.0);
  for (size_t j = 1; j < 5; ++j) {
    EXPECT_NEAR(est.theta[j] / est.theta[0], 1.0 / (j + 1), 0.1) << "rank " << j + 1;
  }
  for (double t : est.theta) {
    EXPECT_GT(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
}

TEST_F(DlaTest, RankOneOnlyClicksLeaveDeeperRanksUnidentifiable) {
  std::vector<Session> sessions;
  for (int i = 0; i < 200; ++i) {
    const QueryList& q = data_->train()[i % data_->train().size()];
    std::vector<uint8_t> c(q.size(), 0);
    c[0] = 1;
    sessions.push_back({q.query_id, c});
  }
  DlaConfig cfg;
  cfg.steps = 200;
  ThetaEstimate est = EstimatePbmDla(ClickLog(sessions), *data_, cfg);
  EXPECT_EQ(est.theta[0], 1.0);
  EXPECT_EQ(est.unidentifiable[0], 0);
  for (size_t j = 1; j < est.theta.size(); ++j) EXPECT_EQ(est.unidentifiable[j], 1);
  EXPECT_THROW(EstimatePbmDla(ClickLog(), *data_, cfg), std::invalid_argument);
}

}  // namespace
}  // namespace cltr
