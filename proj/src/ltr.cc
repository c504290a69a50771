#include "cltr/ltr.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "cltr/random.h"

namespace cltr {
namespace {

// One training example: a list plus target weights per document.
struct Example {
  size_t list = 0;
  std::vector<uint8_t> clicks;
  std::vector<double> weights;
  int clicks_count = 0;
};

double GradientNorm(const std::vector<Layer>& grad) {
  double ss = 0.0;
  for (const Layer& l : grad) {
    ss += l.weight.squaredNorm() + l.bias.squaredNorm();
  }
  return std::sqrt(ss);
}

}  // namespace

TrainMode ParseTrainMode(const std::string& name) {
  if (name == "ips") return TrainMode::kIps;
  if (name == "no-ips" || name == "no_ips") return TrainMode::kNoIps;
  if (name == "full-info" || name == "full_info") return TrainMode::kFullInfo;
  throw std::invalid_argument("unknown training mode '" + name + "'");
}

std::string TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kIps:
      return "ips";
    case TrainMode::kNoIps:
      return "no-ips";
    case TrainMode::kFullInfo:
      return "full-info";
  }
  return "";
}

std::vector<double> SessionWeights(const PropensitySource& source,
                                   const QueryList& list,
                                   std::span<const uint8_t> clicks,
                                   const ClippingPolicy& policy,
                                   const Ranker* ranker) {
  std::vector<double> relevance;
  if (std::holds_alternative<CcmParams>(source.params)) {
    if (source.ccm_relevance == PropensitySource::CcmRelevance::kOracle) {
      for (const Document& d : list.docs) relevance.push_back(d.relevance);
    } else {
      if (!ranker) throw std::invalid_argument("CCM weights need a ranker");
      relevance = NormalizeScores(ranker->ScoreList(list), source.ccm_normalizer);
    }
  }
  const PropensityVector p = ClipPropensity(
      SessionPropensity(source.params, list, clicks, relevance), policy);
  return IpsWeights(p, clicks, policy);
}

TrainResult Train(const PreparedDataset& data, const ClickLog* log,
                  const std::optional<PropensitySource>& source,
                  const TrainConfig& config) {
  if (config.learning_rate <= 0.0 || config.batch_size == 0 ||
      config.steps < 0) {
    throw std::invalid_argument("learning rate, batch size and steps must be positive");
  }
  config.clipping.Validate();
  if (data.train().empty()) throw std::invalid_argument("no training queries");
  const bool full_info = config.mode == TrainMode::kFullInfo;
  if (!full_info && (!log || log->empty())) {
    throw std::invalid_argument(TrainModeName(config.mode) +
                                " training needs a non-empty click log");
  }
  if (config.mode == TrainMode::kIps && !source) {
    throw std::invalid_argument("ips training needs a propensity source");
  }

  TrainResult result;
  Ranker& ranker = result.ranker;
  if (config.mlp) {
    MlpArchitecture arch = *config.mlp;
    arch.input_dim = data.feature_dim();
    ranker = Ranker::Mlp(arch, DeriveSeed(config.seed, HashLabel("init")));
  } else {
    ranker = Ranker::Linear(data.feature_dim());
  }

  std::vector<Eigen::MatrixXd> features;
  features.reserve(data.train().size());
  for (const QueryList& q : data.train()) {
    features.push_back(Ranker::FeatureMatrix(q));
  }
  std::unordered_map<QueryId, size_t> list_index;
  for (size_t i = 0; i < data.train().size(); ++i) {
    list_index.emplace(data.train()[i].query_id, i);
  }

  std::vector<Example> examples;
  const bool dynamic_weights =
      config.mode == TrainMode::kIps && source->DependsOnRanker();
  if (full_info) {
    for (size_t i = 0; i < data.train().size(); ++i) {
      const std::vector<int> rel = data.train()[i].Relevance();
      Example ex{i, std::vector<uint8_t>(rel.begin(), rel.end()), {}, 0};
      const double n_rel = data.train()[i].RelevantCount();
      for (int r : rel) ex.weights.push_back(r ? 1.0 / n_rel : 0.0);
      examples.push_back(std::move(ex));
    }
  } else {
    examples.reserve(log->size());
    for (const Session& s : log->sessions()) {
      auto it = list_index.find(s.query_id);
      if (it == list_index.end()) {
        throw std::invalid_argument("logged query " + s.query_id +
                                    " is not in the training set");
      }
      const QueryList& list = data.train()[it->second];
      if (list.size() != s.clicks.size()) {
        throw std::invalid_argument("session for " + s.query_id +
                                    " has the wrong length");
      }
      Example ex{it->second, s.clicks, {}, s.ClickCount()};
      if (config.mode == TrainMode::kNoIps) {
        ex.weights.assign(s.clicks.begin(), s.clicks.end());
      } else if (!dynamic_weights) {
        ex.weights = SessionWeights(*source, list, s.clicks, config.clipping);
      }
      examples.push_back(std::move(ex));
    }
  }

  Rng order_rng(DeriveSeed(config.seed, HashLabel("order")));
  Rng dropout_rng(DeriveSeed(config.seed, HashLabel("dropout")));
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = order.size();
  int64_t clicks_consumed = 0;
  const bool use_dropout =
      config.mlp.has_value() && config.mlp->dropout > 0.0;

  auto evaluate = [&](int64_t step) {
    const double ndcg = EvaluateRanker(ranker, data.test(), config.eval_k).mean;
    result.curve.push_back({step, clicks_consumed, ndcg});
    return ndcg;
  };

  result.loss_history.reserve(static_cast<size_t>(config.steps));
  for (int64_t step = 0; step < config.steps; ++step) {
    if (config.eval_every > 0 && step % config.eval_every == 0) evaluate(step);
    std::vector<Layer> grad = ranker.ZeroGradient();
    double batch_loss = 0.0;
    for (size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        cursor = 0;
      }
      const Example& ex = examples[order[cursor++]];
      clicks_consumed += ex.clicks_count;
      Ranker::Cache cache;
      const Eigen::VectorXd scores = ranker.Forward(
          features[ex.list], &cache, use_dropout ? &dropout_rng : nullptr);
      if (!scores.allFinite()) {
        std::ostringstream msg;
        msg << TrainModeName(config.mode) << " training diverged at step "
            << step << " (non-finite scores, lr " << config.learning_rate
            << ")";
        throw std::runtime_error(msg.str());
      }
      std::span<const double> score_span(scores.data(),
                                         static_cast<size_t>(scores.size()));
      std::vector<double> dynamic;
      if (dynamic_weights) {
        dynamic = SessionWeights(*source, data.train()[ex.list], ex.clicks,
                                 config.clipping, &ranker);
      }
      const LossAndGradient lg = IpsListwiseLoss(
          score_span, ex.clicks, dynamic_weights ? dynamic : ex.weights);
      batch_loss += lg.loss;
      ranker.Backward(cache,
                      Eigen::Map<const Eigen::VectorXd>(lg.gradient.data(),
                                                        scores.size()),
                      &grad);
    }
    batch_loss /= static_cast<double>(config.batch_size);
    if (!std::isfinite(batch_loss)) {
      std::ostringstream msg;
      msg << TrainModeName(config.mode) << " training diverged at step " << step
          << " (batch loss " << batch_loss << ", lr " << config.learning_rate
          << ")";
      throw std::runtime_error(msg.str());
    }
    result.loss_history.push_back(batch_loss);
    double scale = config.learning_rate / static_cast<double>(config.batch_size);
    if (config.max_grad_norm > 0.0) {
      const double norm = GradientNorm(grad) / static_cast<double>(config.batch_size);
      if (norm > config.max_grad_norm) scale *= config.max_grad_norm / norm;
    }
    for (size_t l = 0; l < grad.size(); ++l) {
      ranker.layers()[l].weight -= scale * grad[l].weight;
      ranker.layers()[l].bias -= scale * grad[l].bias;
    }
  }
  if (!ranker.AllFinite()) {
    throw std::runtime_error("ranker weights became non-finite");
  }
  ranker.metadata().steps = config.steps;
  ranker.metadata().seed = config.seed;
  result.final_ndcg = evaluate(config.steps);
  return result;
}

void WriteCurveCsv(const std::string& path,
                   const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "clicks_consumed,ndcg_at_10\n" << std::setprecision(10);
  for (const CurvePoint& p : curve) {
    out << p.clicks_consumed << ',' << p.ndcg << '\n';
  }
}

}  // namespace cltr
