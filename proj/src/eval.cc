#include "cltr/eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "cltr/loss.h"
#include "cltr/propensity.h"

namespace cltr {
namespace {

double Discount(size_t rank0) { return 1.0 / std::log2(static_cast<double>(rank0) + 2.0); }

}  // namespace

double NdcgAtK(std::span<const double> scores, std::span<const int> relevance,
               size_t k, std::span<const DocId> doc_ids) {
  if (scores.size() != relevance.size() ||
      (!doc_ids.empty() && doc_ids.size() != scores.size())) {
    throw std::invalid_argument("nDCG inputs differ in length");
  }
  const auto n_rel = static_cast<size_t>(std::count_if(
      relevance.begin(), relevance.end(), [](int r) { return r != 0; }));
  if (n_rel == 0) throw std::invalid_argument("nDCG needs a relevant document");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (!doc_ids.empty() && doc_ids[a] != doc_ids[b]) return doc_ids[a] < doc_ids[b];
    return a < b;
  });
  double dcg = 0.0;
  for (size_t r = 0; r < std::min(k, order.size()); ++r) {
    if (relevance[order[r]]) dcg += Discount(r);
  }
  double ideal = 0.0;
  for (size_t r = 0; r < std::min(k, n_rel); ++r) ideal += Discount(r);
  return dcg / ideal;
}

EvalReport EvaluateRanker(const Ranker& ranker, std::span<const QueryList> lists,
                          size_t k) {
  EvalReport report;
  double sum = 0.0;
  for (const QueryList& q : lists) {
    if (q.RelevantCount() == 0) continue;
    std::vector<DocId> ids;
    ids.reserve(q.size());
    for (const Document& d : q.docs) ids.push_back(d.doc_id);
    const double v = NdcgAtK(ranker.ScoreList(q), q.Relevance(), k, ids);
    report.per_query.emplace_back(q.query_id, v);
    sum += v;
  }
  if (!report.per_query.empty()) {
    report.mean = sum / static_cast<double>(report.per_query.size());
  }
  return report;
}

TTestResult PairedTTest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("paired t-test needs equal lengths >= 2");
  }
  const size_t n = a.size();
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTestResult r;
  r.df = n - 1;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(
                                  std::numeric_limits<double>::infinity(), mean);
    r.p = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(
                                dist, std::fabs(r.t))));
  return r;
}

NormalizerKind ParseNormalizer(const std::string& name) {
  if (name == "softmax") return NormalizerKind::kSoftmax;
  if (name == "sigmoid") return NormalizerKind::kSigmoid;
  if (name == "exp-minmax" || name == "exp_minmax") {
    return NormalizerKind::kExpMinMax;
  }
  throw std::invalid_argument("unknown normalizer '" + name + "'");
}

std::string NormalizerName(NormalizerKind kind) {
  switch (kind) {
    case NormalizerKind::kSoftmax:
      return "softmax";
    case NormalizerKind::kSigmoid:
      return "sigmoid";
    case NormalizerKind::kExpMinMax:
      return "exp-minmax";
  }
  return "";
}

std::vector<double> NormalizeScores(std::span<const double> scores,
                                    NormalizerKind kind) {
  constexpr double kTiny = std::numeric_limits<double>::min();
  std::vector<double> p(scores.size());
  switch (kind) {
    case NormalizerKind::kSoftmax:
      p = Softmax(scores);
      break;
    case NormalizerKind::kSigmoid:
      for (size_t j = 0; j < scores.size(); ++j) {
        p[j] = 1.0 / (1.0 + std::exp(-scores[j]));
      }
      break;
    case NormalizerKind::kExpMinMax: {
      if (scores.empty()) break;
      const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
      const double range = *hi - *lo;
      for (size_t j = 0; j < scores.size(); ++j) {
        p[j] = range > 0.0 ? std::exp((scores[j] - *lo) / range - 1.0) : 0.5;
      }
      break;
    }
  }
  for (double& v : p) v = std::clamp(v, kTiny, 1.0);
  return p;
}

double ClickLogLikelihood(const ClickLog& log, const PreparedDataset& data,
                          const RelevanceFn& relevance,
                          const ClickModelParams& model) {
  std::unordered_map<QueryId, std::vector<double>> relevance_cache;
  double ll = 0.0;
  for (const Session& s : log.sessions()) {
    const QueryList* list = data.FindTrain(s.query_id);
    if (!list) throw std::invalid_argument("unknown query " + s.query_id);
    auto it = relevance_cache.find(s.query_id);
    if (it == relevance_cache.end()) {
      it = relevance_cache.emplace(s.query_id, relevance(*list)).first;
      if (it->second.size() != list->size()) {
        throw std::invalid_argument("relevance for " + s.query_id +
                                    " has the wrong length");
      }
    }
    const std::vector<double>& rel = it->second;
    const PropensityVector exam = SessionPropensity(model, *list, s.clicks, rel);
    for (size_t j = 0; j < s.clicks.size(); ++j) {
      const double p_click = exam.values[j] * rel[j];
      const double p = s.clicks[j] ? p_click : 1.0 - p_click;
      ll += std::log(std::max(p, kProbabilityFloor));
    }
  }
  return ll;
}

double ClickLogLikelihood(const ClickLog& log, const PreparedDataset& data,
                          const Ranker& ranker, const ClickModelParams& model,
                          NormalizerKind normalizer) {
  return ClickLogLikelihood(
      log, data,
      [&](const QueryList& list) {
        return NormalizeScores(ranker.ScoreList(list), normalizer);
      },
      model);
}

Selection SelectMethod(const ClickLog& log, const PreparedDataset& data,
                       const Ranker& ranker,
                       std::span<const Candidate> candidates,
                       NormalizerKind normalizer) {
  if (candidates.size() < 2) {
    throw std::invalid_argument("method selection needs >= 2 candidates");
  }
  Selection sel;
  size_t best = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const double ll = ClickLogLikelihood(log, data, ranker,
                                         candidates[i].params, normalizer);
    sel.log_likelihood.emplace_back(candidates[i].label, ll);
    if (i == 0) continue;
    const double top = sel.log_likelihood[best].second;
    const bool pbm_i = std::holds_alternative<PbmParams>(candidates[i].params);
    const bool pbm_best =
        std::holds_alternative<PbmParams>(candidates[best].params);
    if (ll > top || (ll == top && pbm_i && !pbm_best)) best = i;
  }
  sel.chosen = candidates[best].label;
  return sel;
}

}  // namespace cltr
