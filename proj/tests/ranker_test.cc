#include "cltr/ranker.h"

#include <gtest/gtest.h>

#include "test_util.h"

namespace cltr {
namespace {

using testing::MakeList;

Ranker RandomLinear(size_t dim, uint64_t seed) {
  Ranker r = Ranker::Linear(dim);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < r.layers()[0].weight.cols(); ++i) {
    r.layers()[0].weight(0, i) = rng.Normal();
  }
  return r;
}

TEST(RankerTest, ZeroWeightsScoreZero) {
  Ranker r = Ranker::Linear(3);
  for (double s : r.ScoreList(MakeList("q", {1, 0, 0, 1}))) EXPECT_EQ(s, 0.0);
}

TEST(RankerTest, ScalingWeightsDoublesScores) {
  QueryList q = MakeList("q", {1, 0, 0, 1, 0}, 3);
  Ranker r = RandomLinear(3, 1);
  std::vector<double> base = r.ScoreList(q);
  r.layers()[0].weight *= 2.0;
  std::vector<double> doubled = r.ScoreList(q);
  for (size_t i = 0; i < base.size(); ++i) {
    EXPECT_DOUBLE_EQ(doubled[i], 2.0 * base[i]);
  }
}

TEST(RankerTest, InferenceIsDeterministic) {
  QueryList q = MakeList("q", {1, 0, 0}, 4);
  Ranker r = Ranker::Mlp({4, {8, 4}, "elu", 0.5}, 3);
  EXPECT_EQ(r.ScoreList(q), r.ScoreList(q));
  EXPECT_EQ(Ranker::Mlp({4, {8, 4}, "elu", 0.5}, 3), r);
}

TEST(RankerTest, DimMismatchThrows) {
  Ranker r = Ranker::Linear(5);
  EXPECT_THROW(r.ScoreList(MakeList("q", {1}, 3)), std::invalid_argument);
  EXPECT_THROW(Ranker::Linear(0), std::invalid_argument);
  EXPECT_THROW(Ranker::Mlp({3, {4}, "gelu", 0.0}, 1), std::invalid_argument);
  EXPECT_THROW(Ranker::Mlp({3, {4}, "elu", 1.0}, 1), std::invalid_argument);
}

TEST(RankerTest, JsonAndFileRoundTrip) {
  testing::TempDir dir("ranker");
  QueryList q = MakeList("q", {1, 0, 1}, 6);
  for (const Ranker& r :
       {RandomLinear(6, 2), Ranker::Mlp({6, {5, 3}, "tanh", 0.1}, 9)}) {
    Ranker copy = Ranker::FromJson(Json::parse(r.ToJson().dump()));
    EXPECT_EQ(copy, r);
    EXPECT_EQ(copy.ScoreList(q), r.ScoreList(q));
    r.Save(dir.File("m.json"));
    EXPECT_EQ(Ranker::Load(dir.File("m.json")), r);
  }
}

// Backward() against central differences of Forward() for every parameter.
TEST(RankerTest, BackwardMatchesFiniteDifferences) {
  for (const char* act : {"elu", "relu", "tanh"}) {
    Ranker r = Ranker::Mlp({4, {6, 3}, act, 0.0}, 17);
    Eigen::MatrixXd x = Ranker::FeatureMatrix(MakeList("q", {1, 0, 0, 1, 0}, 4));
    Rng rng(4);
    Eigen::VectorXd upstream(x.rows());
    for (Eigen::Index i = 0; i < upstream.size(); ++i) upstream(i) = rng.Normal();
    auto objective = [&](const Ranker& m) {
      return m.Forward(x, nullptr, nullptr).dot(upstream);
    };
    Ranker::Cache cache;
    r.Forward(x, &cache, nullptr);
    std::vector<Layer> grad = r.ZeroGradient();
    r.Backward(cache, upstream, &grad);
    const double h = 1e-6;
    for (size_t l = 0; l < r.layers().size(); ++l) {
      Eigen::MatrixXd& w = r.layers()[l].weight;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        double saved = w.data()[i];
        w.data()[i] = saved + h;
        double up = objective(r);
        w.data()[i] = saved - h;
        double down = objective(r);
        w.data()[i] = saved;
        EXPECT_NEAR(grad[l].weight.data()[i], (up - down) / (2 * h), 1e-6)
            << act << " layer " << l;
      }
      Eigen::VectorXd& b = r.layers()[l].bias;
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        double saved = b(i);
        b(i) = saved + h;
        double up = objective(r);
        b(i) = saved - h;
        double down = objective(r);
        b(i) = saved;
        EXPECT_NEAR(grad[l].bias(i), (up - down) / (2 * h), 1e-6);
      }
    }
  }
}

TEST(RankerTest, DropoutOnlyInTraining) {
  Ranker r = Ranker::Mlp({4, {16, 16}, "relu", 0.5}, 5);
  Eigen::MatrixXd x = Ranker::FeatureMatrix(MakeList("q", {1, 0, 0}, 4));
  Eigen::VectorXd eval = r.Forward(x, nullptr, nullptr);
  EXPECT_EQ(eval, r.Forward(x, nullptr, nullptr));
  Rng rng(1);
  bool differs = false;
  for (int i = 0; i < 10 && !differs; ++i) {
    differs = r.Forward(x, nullptr, &rng) != eval;
  }
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace cltr
