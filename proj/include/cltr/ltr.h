// Listwise ranker training from click logs (IPS-weighted or naive) or from
// true relevance labels (full-information skyline).

#ifndef CLTR_LTR_H_
#define CLTR_LTR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cltr/core.h"
#include "cltr/dataset.h"
#include "cltr/eval.h"
#include "cltr/loss.h"
#include "cltr/propensity.h"
#include "cltr/ranker.h"

namespace cltr {

enum class TrainMode { kIps, kNoIps, kFullInfo };

// "ips", "no-ips", "full-info".
TrainMode ParseTrainMode(const std::string& name);
std::string TrainModeName(TrainMode mode);

// Where the per-session propensities come from in IPS mode.
struct PropensitySource {
  enum class CcmRelevance { kOracle, kRanker };

  ClickModelParams params;
  // R_i for CCM: the true labels, or the current ranker's normalized scores.
  CcmRelevance ccm_relevance = CcmRelevance::kOracle;
  NormalizerKind ccm_normalizer = NormalizerKind::kExpMinMax;

  bool DependsOnRanker() const {
    return std::holds_alternative<CcmParams>(params) &&
           ccm_relevance == CcmRelevance::kRanker;
  }
};

// Clipped IPS weights for one session. `ranker` is only consulted for CCM
// with ranker relevance.
std::vector<double> SessionWeights(const PropensitySource& source,
                                   const QueryList& list,
                                   std::span<const uint8_t> clicks,
                                   const ClippingPolicy& policy,
                                   const Ranker* ranker = nullptr);

struct TrainConfig {
  TrainMode mode = TrainMode::kIps;
  double learning_rate = 0.01;
  size_t batch_size = 16;   // sessions (or queries in full-info) per step
  int64_t steps = 24000;
  double max_grad_norm = 0.0;  // 0 disables the cap
  ClippingPolicy clipping;
  uint64_t seed = 0;
  int64_t eval_every = 0;   // steps between curve points; 0: final only
  size_t eval_k = 10;
  // Unset means a linear scorer over the dataset's features.
  std::optional<MlpArchitecture> mlp;
};

struct CurvePoint {
  int64_t step = 0;
  int64_t clicks_consumed = 0;
  double ndcg = 0.0;
};

struct TrainResult {
  Ranker ranker;
  std::vector<CurvePoint> curve;
  std::vector<double> loss_history;  // mean batch loss per step
  double final_ndcg = 0.0;           // mean test nDCG@eval_k
};

// SGD over shuffled sessions (or training queries in full-info mode). In
// no-ips mode every click weighs 1. Deterministic under config.seed. Throws
// std::invalid_argument on missing inputs and std::runtime_error when the
// loss becomes non-finite.
TrainResult Train(const PreparedDataset& data, const ClickLog* log,
                  const std::optional<PropensitySource>& source,
                  const TrainConfig& config);

// CSV with header clicks_consumed,ndcg_at_10.
void WriteCurveCsv(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace cltr

#endif  // CLTR_LTR_H_
