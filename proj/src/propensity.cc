#include "cltr/propensity.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cltr/loss.h"
#include "cltr/random.h"

namespace cltr {
namespace {

void RequireLength(size_t have, size_t need, const char* what) {
  if (have < need) {
    throw std::invalid_argument(std::string(what) + " has " +
                                std::to_string(have) + " entries, need " +
                                std::to_string(need));
  }
}

// values[0] = 1, values[j] = prod_{i<j} step(i).
template <typename Step>
PropensityVector CascadeProduct(size_t n, Step step) {
  PropensityVector p{std::vector<double>(n, 1.0), std::vector<uint8_t>(n, 0)};
  double running = 1.0;
  for (size_t j = 1; j < n; ++j) {
    running *= step(j - 1);
    p.values[j] = running;
  }
  return p;
}

}  // namespace

void ClippingPolicy::Validate() const {
  if (!(std::isfinite(max_weight) && max_weight >= 1.0)) {
    throw std::invalid_argument("clipping max_weight must be >= 1");
  }
}

void RelevanceEstimate::Set(const QueryId& query_id, const DocId& doc_id,
                            double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw std::invalid_argument("relevance estimate must lie in [0, 1]");
  }
  values_[{query_id, doc_id}] = probability;
}

double RelevanceEstimate::Get(const QueryId& query_id,
                              const DocId& doc_id) const {
  auto it = values_.find({query_id, doc_id});
  if (it == values_.end()) {
    throw std::out_of_range("no relevance estimate for " + query_id + "/" +
                            doc_id);
  }
  return it->second;
}

std::vector<double> RelevanceEstimate::ForList(const QueryList& list) const {
  std::vector<double> out;
  out.reserve(list.size());
  for (const Document& d : list.docs) out.push_back(Get(list.query_id, d.doc_id));
  return out;
}

// ---------------------------------------------------------------------------

PropensityVector PbmPropensity(std::span<const double> theta,
                               size_t list_length) {
  RequireLength(theta.size(), list_length, "PBM theta");
  return PropensityVector{
      std::vector<double>(theta.begin(), theta.begin() + list_length),
      std::vector<uint8_t>(list_length, 0)};
}

PropensityVector DcmPropensity(std::span<const double> lambda,
                               std::span<const uint8_t> clicks) {
  RequireLength(lambda.size(), clicks.size(), "DCM lambda");
  return CascadeProduct(clicks.size(), [&](size_t i) {
    return 1.0 - clicks[i] * (1.0 - lambda[i]);
  });
}

PropensityVector DbnPropensity(double gamma,
                               std::span<const double> satisfaction,
                               std::span<const uint8_t> clicks) {
  RequireLength(satisfaction.size(), clicks.size(), "DBN satisfaction");
  return CascadeProduct(clicks.size(), [&](size_t i) {
    return gamma * (1.0 - clicks[i] * satisfaction[i]);
  });
}

PropensityVector CcmPropensity(double alpha1, double alpha2, double alpha3,
                               std::span<const double> relevance,
                               std::span<const uint8_t> clicks) {
  RequireLength(relevance.size(), clicks.size(), "CCM relevance");
  return CascadeProduct(clicks.size(), [&](size_t i) {
    return alpha1 - clicks[i] * (alpha1 - alpha2 * (1.0 - relevance[i]) -
                                 alpha3 * relevance[i]);
  });
}

PropensityVector SessionPropensity(const ClickModelParams& params,
                                   const QueryList& list,
                                   std::span<const uint8_t> clicks,
                                   std::span<const double> ccm_relevance) {
  if (clicks.size() != list.size()) {
    throw std::invalid_argument("click vector length differs from list");
  }
  if (const auto* pbm = std::get_if<PbmParams>(&params)) {
    return PbmPropensity(pbm->theta(), clicks.size());
  }
  if (const auto* dcm = std::get_if<DcmParams>(&params)) {
    return DcmPropensity(dcm->lambda(), clicks);
  }
  if (const auto* dbn = std::get_if<DbnParams>(&params)) {
    std::vector<double> s;
    s.reserve(list.size());
    for (const Document& d : list.docs) {
      s.push_back(dbn->Satisfaction(list.query_id, d.doc_id));
    }
    return DbnPropensity(dbn->gamma(), s, clicks);
  }
  const auto& ccm = std::get<CcmParams>(params);
  return CcmPropensity(ccm.alpha1(), ccm.alpha2(), ccm.alpha3(), ccm_relevance,
                       clicks);
}

PropensityVector ClipPropensity(PropensityVector propensity,
                                const ClippingPolicy& policy) {
  policy.Validate();
  propensity.clipped.resize(propensity.values.size(), 0);
  for (size_t j = 0; j < propensity.values.size(); ++j) {
    if (propensity.values[j] < policy.floor()) {
      propensity.values[j] = policy.floor();
      propensity.clipped[j] = 1;
    }
  }
  return propensity;
}

std::vector<double> IpsWeights(const PropensityVector& propensity,
                               std::span<const uint8_t> clicks,
                               const ClippingPolicy& policy) {
  if (propensity.size() != clicks.size()) {
    throw std::invalid_argument("propensity and clicks differ in length");
  }
  policy.Validate();
  std::vector<double> w(clicks.size(), 0.0);
  for (size_t j = 0; j < clicks.size(); ++j) {
    if (!clicks[j]) continue;
    const double p = propensity.values[j];
    w[j] = p <= 0.0 ? policy.max_weight : std::min(1.0 / p, policy.max_weight);
  }
  return w;
}

std::vector<double> MarginalExamination(const ClickModelParams& params,
                                        const QueryList& list,
                                        const NoiseSpec& noise) {
  const size_t n = list.size();
  if (const auto* pbm = std::get_if<PbmParams>(&params)) {
    return PbmPropensity(pbm->theta(), n).values;
  }
  auto click = [&](size_t i) {
    return noise.ClickProbability(list.docs[i].relevance);
  };
  PropensityVector p;
  if (const auto* dcm = std::get_if<DcmParams>(&params)) {
    RequireLength(dcm->lambda().size(), n, "DCM lambda");
    p = CascadeProduct(n, [&](size_t i) {
      return 1.0 - click(i) * (1.0 - dcm->lambda()[i]);
    });
  } else if (const auto* dbn = std::get_if<DbnParams>(&params)) {
    p = CascadeProduct(n, [&](size_t i) {
      return dbn->gamma() *
             (1.0 - click(i) * dbn->Satisfaction(list.query_id,
                                                 list.docs[i].doc_id));
    });
  } else {
    const auto& ccm = std::get<CcmParams>(params);
    p = CascadeProduct(n, [&](size_t i) {
      const double after_click =
          list.docs[i].relevance ? ccm.alpha3() : ccm.alpha2();
      return (1.0 - click(i)) * ccm.alpha1() + click(i) * after_click;
    });
  }
  return p.values;
}

PbmParams MarginalPbmTheta(const ClickModelParams& params,
                           std::span<const QueryList> lists,
                           const NoiseSpec& noise) {
  size_t k = 0;
  for (const QueryList& q : lists) k = std::max(k, q.size());
  if (k == 0) throw std::invalid_argument("no lists to average over");
  std::vector<double> sum(k, 0.0);
  std::vector<double> count(k, 0.0);
  for (const QueryList& q : lists) {
    const std::vector<double> e = MarginalExamination(params, q, noise);
    for (size_t j = 0; j < e.size(); ++j) {
      sum[j] += e[j];
      count[j] += 1.0;
    }
  }
  std::vector<double> theta(k);
  for (size_t j = 0; j < k; ++j) {
    theta[j] = std::clamp(sum[j] / count[j], 1e-12, 1.0);
  }
  return PbmParams(std::move(theta));
}

LambdaEstimate MleDcmLambda(const ClickLog& log, size_t k,
                            double default_value) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (!(default_value >= 0.0 && default_value <= 1.0)) {
    throw std::invalid_argument("default lambda must lie in [0, 1]");
  }
  std::vector<int64_t> clicked(k, 0);
  std::vector<int64_t> continued(k, 0);
  for (const Session& s : log.sessions()) {
    const size_t n = std::min(k, s.clicks.size());
    size_t last = n;
    for (size_t j = 0; j < s.clicks.size(); ++j) {
      if (s.clicks[j]) last = j;
    }
    for (size_t j = 0; j < n; ++j) {
      if (!s.clicks[j]) continue;
      ++clicked[j];
      if (j != last) ++continued[j];
    }
  }
  LambdaEstimate est{std::vector<double>(k), clicked, std::vector<uint8_t>(k, 0)};
  double carry = default_value;
  for (size_t j = 0; j < k; ++j) {
    if (clicked[j] > 0) {
      est.lambda[j] =
          static_cast<double>(continued[j]) / static_cast<double>(clicked[j]);
      carry = est.lambda[j];
    } else {
      est.lambda[j] = carry;
      est.imputed[j] = 1;
    }
  }
  return est;
}

ThetaEstimate EstimatePbmDla(const ClickLog& log, const PreparedDataset& data,
                             const DlaConfig& config) {
  if (log.empty()) throw std::invalid_argument("DLA needs a non-empty log");
  config.clipping.Validate();
  const size_t k = data.MaxListLength();
  std::vector<const QueryList*> lists;
  lists.reserve(log.size());
  ThetaEstimate est;
  est.support.assign(k, 0);
  for (const Session& s : log.sessions()) {
    const QueryList* list = data.FindTrain(s.query_id);
    if (!list) throw std::invalid_argument("unknown query " + s.query_id);
    if (list->size() != s.clicks.size()) {
      throw std::invalid_argument("session length differs from list for " +
                                  s.query_id);
    }
    lists.push_back(list);
    for (size_t j = 0; j < s.clicks.size(); ++j) est.support[j] += s.clicks[j];
  }

  Ranker ranker = Ranker::Linear(data.feature_dim());
  std::vector<double> logits(k, 0.0);
  std::vector<Eigen::MatrixXd> features(data.train().size());
  Rng rng(DeriveSeed(config.seed, HashLabel("dla")));
  std::vector<size_t> order(log.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();
  const double cap = config.clipping.max_weight;

  for (int64_t step = 0; step < config.steps; ++step) {
    std::vector<Layer> grad = ranker.ZeroGradient();
    std::vector<double> logit_grad(k, 0.0);
    double ranker_loss = 0.0;
    double propensity_loss = 0.0;
    for (size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      const Session& s = log.sessions()[idx];
      const QueryList& list = *lists[idx];
      const size_t n = list.size();
      Ranker::Cache cache;
      const Eigen::VectorXd f =
          ranker.Forward(Ranker::FeatureMatrix(list), &cache, nullptr);
      std::vector<double> ranker_w(n, 0.0);
      std::vector<double> prop_w(n, 0.0);
      for (size_t j = 0; j < n; ++j) {
        if (!s.clicks[j]) continue;
        const double theta_ratio = std::exp(logits[j] - logits[0]);
        const double rel_ratio = std::exp(f(static_cast<Eigen::Index>(j)) - f(0));
        ranker_w[j] = std::min(1.0 / theta_ratio, cap);
        prop_w[j] = std::min(1.0 / rel_ratio, cap);
      }
      const std::vector<double> scores(f.data(), f.data() + n);
      LossAndGradient rl = IpsListwiseLoss(scores, s.clicks, ranker_w);
      LossAndGradient pl = IpsListwiseLoss(
          std::span<const double>(logits.data(), n), s.clicks, prop_w);
      ranker_loss += rl.loss;
      propensity_loss += pl.loss;
      ranker.Backward(cache,
                      Eigen::Map<const Eigen::VectorXd>(
                          rl.gradient.data(), static_cast<Eigen::Index>(n)),
                      &grad);
      for (size_t j = 0; j < n; ++j) logit_grad[j] += pl.gradient[j];
    }
    if (!std::isfinite(ranker_loss) || !std::isfinite(propensity_loss)) {
      std::ostringstream msg;
      msg << "DLA diverged at step " << step << ": ranker loss " << ranker_loss
          << ", propensity loss " << propensity_loss;
      throw std::runtime_error(msg.str());
    }
    const double scale = 1.0 / static_cast<double>(config.batch_size);
    for (size_t l = 0; l < grad.size(); ++l) {
      ranker.layers()[l].weight -=
          config.ranker_learning_rate * scale * grad[l].weight;
      ranker.layers()[l].bias -= config.ranker_learning_rate * scale * grad[l].bias;
    }
    for (size_t j = 0; j < k; ++j) {
      logits[j] -= config.propensity_learning_rate * scale * logit_grad[j];
    }
  }
  if (!ranker.AllFinite()) throw std::runtime_error("DLA ranker diverged");

  est.theta.resize(k);
  est.unidentifiable.assign(k, 0);
  for (size_t j = 0; j < k; ++j) {
    est.theta[j] = std::clamp(std::exp(logits[j] - logits[0]), 1e-6, 1.0);
    if (j > 0 && est.support[j] == 0) est.unidentifiable[j] = 1;
  }
  est.theta[0] = 1.0;
  ranker.metadata().steps = config.steps;
  ranker.metadata().seed = config.seed;
  est.ranker = std::move(ranker);
  return est;
}

}  // namespace cltr
