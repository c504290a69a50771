#include "cltr/loss.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cltr {
namespace {

void CheckScores(std::span<const double> scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("non-finite score in listwise loss");
    }
  }
}

// Weighted cross-entropy without click validation; weights are the target
// mass on each document.
LossAndGradient WeightedCrossEntropy(std::span<const double> scores,
                                     std::span<const double> weights) {
  const size_t n = scores.size();
  LossAndGradient out{0.0, std::vector<double>(n, 0.0)};
  double total = 0.0;
  for (double w : weights) total += w;
  if (n == 0 || total == 0.0) return out;
  const double max = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - max);
  const double log_z = max + std::log(z);
  for (size_t j = 0; j < n; ++j) {
    const double p = std::exp(scores[j] - log_z);
    if (weights[j] != 0.0) out.loss += weights[j] * (log_z - scores[j]);
    out.gradient[j] = total * p - weights[j];
  }
  return out;
}

}  // namespace

std::vector<double> Softmax(std::span<const double> scores) {
  std::vector<double> p(scores.size());
  if (scores.empty()) return p;
  const double max = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (size_t j = 0; j < scores.size(); ++j) {
    p[j] = std::exp(scores[j] - max);
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

LossAndGradient IpsListwiseLoss(std::span<const double> scores,
                                std::span<const uint8_t> clicks,
                                std::span<const double> weights) {
  if (scores.size() != clicks.size() || scores.size() != weights.size()) {
    throw std::invalid_argument("scores, clicks and weights differ in length");
  }
  CheckScores(scores);
  for (size_t j = 0; j < weights.size(); ++j) {
    if (!std::isfinite(weights[j]) || weights[j] < 0.0) {
      throw std::invalid_argument("IPS weights must be finite and >= 0");
    }
    if (clicks[j] == 0 && weights[j] != 0.0) {
      throw std::invalid_argument("non-zero weight at unclicked position " +
                                  std::to_string(j));
    }
  }
  return WeightedCrossEntropy(scores, weights);
}

LossAndGradient FullInfoLoss(std::span<const double> scores,
                             std::span<const int> relevance) {
  if (scores.size() != relevance.size()) {
    throw std::invalid_argument("scores and relevance differ in length");
  }
  CheckScores(scores);
  const auto n_rel = std::count_if(relevance.begin(), relevance.end(),
                                   [](int r) { return r != 0; });
  if (n_rel == 0) {
    throw std::invalid_argument("full-information loss needs a relevant doc");
  }
  std::vector<double> target(scores.size(), 0.0);
  for (size_t j = 0; j < scores.size(); ++j) {
    if (relevance[j]) target[j] = 1.0 / static_cast<double>(n_rel);
  }
  return WeightedCrossEntropy(scores, target);
}

}  // namespace cltr
