#ifndef CLTR_RANKER_H_
#define CLTR_RANKER_H_

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "cltr/core.h"
#include "cltr/random.h"

namespace cltr {

struct LinearArchitecture {
  size_t dim = 0;
  bool operator==(const LinearArchitecture&) const = default;
};

// Feedforward scorer. Hidden layers use `activation`; dropout (training
// only) applies to every hidden layer except the first.
struct MlpArchitecture {
  size_t input_dim = 0;
  std::vector<size_t> hidden;
  std::string activation = "elu";  // "elu", "relu" or "tanh"
  double dropout = 0.0;
  bool operator==(const MlpArchitecture&) const = default;
};

using Architecture = std::variant<LinearArchitecture, MlpArchitecture>;

// Dense affine layer: out = W * in + b.
struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct TrainingMetadata {
  int64_t steps = 0;
  uint64_t seed = 0;
};

// Scoring function f(x). Inference is const and reentrant.
class Ranker {
 public:
  // Activations of one forward pass, kept for backpropagation. Rows are
  // documents.
  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;       // input to each layer
    std::vector<Eigen::MatrixXd> pre;          // pre-activation per hidden layer
    std::vector<Eigen::MatrixXd> dropout_mask; // scaled keep mask, or empty
  };

  Ranker() = default;
  static Ranker Linear(size_t dim);
  // Glorot-uniform weights, zero biases.
  static Ranker Mlp(const MlpArchitecture& arch, uint64_t seed);
  static Ranker FromArchitecture(const Architecture& arch, uint64_t seed);

  const Architecture& architecture() const { return architecture_; }
  size_t input_dim() const;
  bool is_linear() const {
    return std::holds_alternative<LinearArchitecture>(architecture_);
  }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  TrainingMetadata& metadata() { return metadata_; }
  const TrainingMetadata& metadata() const { return metadata_; }

  double Score(const FeatureVector& x) const;
  // One score per document. Throws std::invalid_argument on dim mismatch.
  std::vector<double> ScoreList(const QueryList& list) const;

  // Stacks a list's features into an (n x dim) matrix.
  static Eigen::MatrixXd FeatureMatrix(const QueryList& list);

  // Scores for each row of `x`. With `dropout_rng` set, dropout is active
  // (training mode). `cache` may be null for inference.
  Eigen::VectorXd Forward(const Eigen::MatrixXd& x, Cache* cache,
                          Rng* dropout_rng) const;
  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(scores).
  void Backward(const Cache& cache, const Eigen::VectorXd& dscores,
                std::vector<Layer>* grad) const;
  std::vector<Layer> ZeroGradient() const;

  size_t ParameterCount() const;
  bool AllFinite() const;

  Json ToJson() const;
  static Ranker FromJson(const Json& j);
  void Save(const std::string& path) const;
  static Ranker Load(const std::string& path);

  bool operator==(const Ranker& other) const;

 private:
  Architecture architecture_;
  std::vector<Layer> layers_;
  TrainingMetadata metadata_;
};

}  // namespace cltr

#endif  // CLTR_RANKER_H_
