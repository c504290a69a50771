#ifndef CLTR_EVAL_H_
#define CLTR_EVAL_H_

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cltr/core.h"
#include "cltr/dataset.h"
#include "cltr/ranker.h"

namespace cltr {

// nDCG@k with binary gains and 1/log2(rank + 1) discount. Documents are
// ordered by score (descending), ties by doc id when `doc_ids` is given and
// by list position otherwise. Throws std::invalid_argument when no document
// is relevant.
double NdcgAtK(std::span<const double> scores, std::span<const int> relevance,
               size_t k, std::span<const DocId> doc_ids = {});

struct EvalReport {
  std::string method;
  int repeat = 0;
  std::vector<std::pair<QueryId, double>> per_query;
  double mean = 0.0;
};

EvalReport EvaluateRanker(const Ranker& ranker, std::span<const QueryList> lists,
                          size_t k = 10);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  size_t df = 0;
};

// Two-sided paired t-test. When the differences have zero variance, p is 0
// if their mean is non-zero and 1 otherwise. Throws std::invalid_argument
// unless both inputs have the same length >= 2.
TTestResult PairedTTest(std::span<const double> a, std::span<const double> b);

enum class NormalizerKind { kSoftmax, kSigmoid, kExpMinMax };

// "softmax", "sigmoid", "exp-minmax" (also accepts "exp_minmax").
NormalizerKind ParseNormalizer(const std::string& name);
std::string NormalizerName(NormalizerKind kind);

// Maps ranker scores to relevance probabilities in (0, 1].
//   softmax     exp(s_j) / sum exp(s)
//   sigmoid     1 / (1 + exp(-s_j))
//   exp-minmax  exp(z_j - 1), z_j = (s_j - min) / (max - min); constant lists
//               map to 0.5 everywhere.
std::vector<double> NormalizeScores(std::span<const double> scores,
                                    NormalizerKind kind);

// Floor applied to click and no-click probabilities before taking logs.
inline constexpr double kProbabilityFloor = 1e-6;

// sum over sessions and ranks of log P(C_j = c_j | c_<j), where
// P(C_j = 1 | c_<j) is the model's session-conditional examination times the
// normalized ranker relevance. For CCM the normalized relevance also plays
// the role of R_i.
double ClickLogLikelihood(const ClickLog& log, const PreparedDataset& data,
                          const Ranker& ranker, const ClickModelParams& model,
                          NormalizerKind normalizer);

// Same, with the relevance probabilities of each training list supplied
// directly (e.g. true attractiveness in simulation studies).
using RelevanceFn = std::function<std::vector<double>(const QueryList&)>;
double ClickLogLikelihood(const ClickLog& log, const PreparedDataset& data,
                          const RelevanceFn& relevance,
                          const ClickModelParams& model);

struct Candidate {
  ClickModelParams params;
  std::string label;
};

struct Selection {
  std::string chosen;
  std::vector<std::pair<std::string, double>> log_likelihood;
};

// Picks the candidate with the highest click log-likelihood. Exact ties go
// to a PBM candidate, then to the earlier candidate. Needs >= 2 candidates.
Selection SelectMethod(const ClickLog& log, const PreparedDataset& data,
                       const Ranker& ranker,
                       std::span<const Candidate> candidates,
                       NormalizerKind normalizer);

}  // namespace cltr

#endif  // CLTR_EVAL_H_
