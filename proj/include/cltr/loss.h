#ifndef CLTR_LOSS_H_
#define CLTR_LOSS_H_

#include <cstdint>
#include <span>
#include <vector>

namespace cltr {

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // d(loss)/d(score) per document
};

// Numerically stable softmax over a list.
std::vector<double> Softmax(std::span<const double> scores);

// sum_j weight_j * -log softmax(scores)_j. Weights must be zero wherever the
// click is zero. Throws std::invalid_argument on length mismatch, non-finite
// scores or a weight on an unclicked position.
LossAndGradient IpsListwiseLoss(std::span<const double> scores,
                                std::span<const uint8_t> clicks,
                                std::span<const double> weights);

// Softmax cross-entropy against the uniform distribution over relevant
// documents. Throws std::invalid_argument when nothing is relevant.
LossAndGradient FullInfoLoss(std::span<const double> scores,
                             std::span<const int> relevance);

}  // namespace cltr

#endif  // CLTR_LOSS_H_
