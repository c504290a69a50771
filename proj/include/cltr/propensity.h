// Examination propensities, IPS weights and click-model parameter
// estimation.
//
// Cascade propensities are conditioned on the clicks observed earlier in the
// same session:
//   DCM  P(E_j = 1 | c_<j) = prod_{i<j} (1 - c_i (1 - lambda_i))
//   DBN  P(E_j = 1 | c_<j) = prod_{i<j} gamma (1 - c_i s_i)
//   CCM  P(E_j = 1 | c_<j) = prod_{i<j} (a1 - c_i (a1 - a2 (1 - R_i) - a3 R_i))
// For PBM the propensity is theta_j regardless of clicks.

#ifndef CLTR_PROPENSITY_H_
#define CLTR_PROPENSITY_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cltr/core.h"
#include "cltr/dataset.h"
#include "cltr/ranker.h"

namespace cltr {

struct ClippingPolicy {
  double max_weight = 100.0;

  // Throws std::invalid_argument unless max_weight >= 1.
  void Validate() const;
  double floor() const { return 1.0 / max_weight; }
};

// Plug-in relevance probabilities, keyed by (query id, doc id).
class RelevanceEstimate {
 public:
  void Set(const QueryId& query_id, const DocId& doc_id, double probability);
  // Throws std::out_of_range for an unknown pair.
  double Get(const QueryId& query_id, const DocId& doc_id) const;
  // Values for every document of `list`, in list order.
  std::vector<double> ForList(const QueryList& list) const;
  size_t size() const { return values_.size(); }

 private:
  std::map<std::pair<QueryId, DocId>, double> values_;
};

PropensityVector PbmPropensity(std::span<const double> theta,
                               size_t list_length);
PropensityVector DcmPropensity(std::span<const double> lambda,
                               std::span<const uint8_t> clicks);
PropensityVector DbnPropensity(double gamma,
                               std::span<const double> satisfaction,
                               std::span<const uint8_t> clicks);
PropensityVector CcmPropensity(double alpha1, double alpha2, double alpha3,
                               std::span<const double> relevance,
                               std::span<const uint8_t> clicks);

// Dispatches on the model. `ccm_relevance` supplies R_i for CCM and is
// ignored otherwise.
PropensityVector SessionPropensity(const ClickModelParams& params,
                                   const QueryList& list,
                                   std::span<const uint8_t> clicks,
                                   std::span<const double> ccm_relevance = {});

// Raises every value below 1/max_weight to that floor and flags it.
PropensityVector ClipPropensity(PropensityVector propensity,
                                const ClippingPolicy& policy);

// weight_j = min(1 / p_j, max_weight) where clicked, 0 elsewhere. A zero
// propensity maps to max_weight.
std::vector<double> IpsWeights(const PropensityVector& propensity,
                               std::span<const uint8_t> clicks,
                               const ClippingPolicy& policy);

// Exact P(E_j = 1 | q) for one list under the simulator's dynamics (click
// noise included), marginalized over all click prefixes.
std::vector<double> MarginalExamination(const ClickModelParams& params,
                                        const QueryList& list,
                                        const NoiseSpec& noise);

// Query-averaged marginal examination per rank: the best position-only
// description of a (possibly cascading) click model on these lists. This is
// the oracle theta for PBM-IPS on non-PBM clicks.
PbmParams MarginalPbmTheta(const ClickModelParams& params,
                           std::span<const QueryList> lists,
                           const NoiseSpec& noise);

struct LambdaEstimate {
  std::vector<double> lambda;
  std::vector<int64_t> support;   // sessions with a click at the rank
  std::vector<uint8_t> imputed;   // no support; value carried forward
};

// lambda_j = #(clicked at j, not the last click) / #(clicked at j).
// Unsupported ranks carry the previous supported estimate forward, or
// `default_value` if there is none, and are flagged.
LambdaEstimate MleDcmLambda(const ClickLog& log, size_t k,
                            double default_value = 1.0);

struct DlaConfig {
  int64_t steps = 4000;
  size_t batch_size = 32;
  double ranker_learning_rate = 0.05;
  double propensity_learning_rate = 0.05;
  ClippingPolicy clipping;
  uint64_t seed = 0;
};

struct ThetaEstimate {
  std::vector<double> theta;             // theta[0] == 1
  std::vector<int64_t> support;          // clicks observed at the rank
  std::vector<uint8_t> unidentifiable;   // no clicks at the rank
  Ranker ranker;                         // relevance side of the fit
};

// Simplified dual learning: alternates SGD on a per-rank propensity logit
// vector and a linear ranker, each with softmax cross-entropy on clicks
// weighted by the inverse of the other's current (first-position
// normalized) estimate. Throws std::runtime_error if a loss turns
// non-finite.
ThetaEstimate EstimatePbmDla(const ClickLog& log, const PreparedDataset& data,
                             const DlaConfig& config);

}  // namespace cltr

#endif  // CLTR_PROPENSITY_H_
