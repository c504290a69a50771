#include "cltr/ranker.h"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cltr {
namespace {

double Activate(const std::string& kind, double v) {
  if (kind == "elu") return v > 0.0 ? v : std::expm1(v);
  if (kind == "relu") return v > 0.0 ? v : 0.0;
  return std::tanh(v);
}

double ActivateGrad(const std::string& kind, double pre) {
  if (kind == "elu") return pre > 0.0 ? 1.0 : std::exp(pre);
  if (kind == "relu") return pre > 0.0 ? 1.0 : 0.0;
  double t = std::tanh(pre);
  return 1.0 - t * t;
}

Json LayerToJson(const Layer& layer) {
  std::vector<double> w;
  w.reserve(layer.weight.size());
  for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      w.push_back(layer.weight(r, c));
    }
  }
  std::vector<double> b(layer.bias.data(),
                        layer.bias.data() + layer.bias.size());
  return Json{{"rows", layer.weight.rows()},
              {"cols", layer.weight.cols()},
              {"w", w},
              {"b", b}};
}

Layer LayerFromJson(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto w = j.at("w").get<std::vector<double>>();
  const auto b = j.at("b").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
      static_cast<Eigen::Index>(b.size()) != rows) {
    throw std::invalid_argument("layer weight arrays do not match shape");
  }
  Layer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = w[r * cols + c];
    layer.bias(r) = b[r];
  }
  return layer;
}

}  // namespace

Ranker Ranker::Linear(size_t dim) {
  if (dim == 0) throw std::invalid_argument("ranker dim must be positive");
  Ranker r;
  r.architecture_ = LinearArchitecture{dim};
  r.layers_.push_back(
      {Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(dim)),
       Eigen::VectorXd::Zero(1)});
  return r;
}

Ranker Ranker::Mlp(const MlpArchitecture& arch, uint64_t seed) {
  if (arch.input_dim == 0) {
    throw std::invalid_argument("ranker dim must be positive");
  }
  if (arch.activation != "elu" && arch.activation != "relu" &&
      arch.activation != "tanh") {
    throw std::invalid_argument("unknown activation " + arch.activation);
  }
  if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) {
    throw std::invalid_argument("dropout must lie in [0, 1)");
  }
  Ranker r;
  r.architecture_ = arch;
  Rng rng(seed);
  size_t in = arch.input_dim;
  std::vector<size_t> sizes = arch.hidden;
  sizes.push_back(1);
  for (size_t out : sizes) {
    if (out == 0) throw std::invalid_argument("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = (2.0 * rng.Uniform() - 1.0) * limit;
    }
    r.layers_.push_back(std::move(layer));
    in = out;
  }
  return r;
}

Ranker Ranker::FromArchitecture(const Architecture& arch, uint64_t seed) {
  if (const auto* lin = std::get_if<LinearArchitecture>(&arch)) {
    return Linear(lin->dim);
  }
  return Mlp(std::get<MlpArchitecture>(arch), seed);
}

size_t Ranker::input_dim() const {
  if (layers_.empty()) return 0;
  return static_cast<size_t>(layers_.front().weight.cols());
}

double Ranker::Score(const FeatureVector& x) const {
  if (x.dim() != input_dim()) {
    throw std::invalid_argument("feature dim " + std::to_string(x.dim()) +
                                " does not match ranker dim " +
                                std::to_string(input_dim()));
  }
  Eigen::Map<const Eigen::RowVectorXd> row(x.values.data(),
                                           static_cast<Eigen::Index>(x.dim()));
  return Forward(row, nullptr, nullptr)(0);
}

std::vector<double> Ranker::ScoreList(const QueryList& list) const {
  for (const Document& d : list.docs) {
    if (d.features.dim() != input_dim()) {
      throw std::invalid_argument(
          "feature dim " + std::to_string(d.features.dim()) +
          " does not match ranker dim " + std::to_string(input_dim()));
    }
  }
  if (list.docs.empty()) return {};
  Eigen::VectorXd s = Forward(FeatureMatrix(list), nullptr, nullptr);
  return {s.data(), s.data() + s.size()};
}

Eigen::MatrixXd Ranker::FeatureMatrix(const QueryList& list) {
  const Eigen::Index n = static_cast<Eigen::Index>(list.docs.size());
  const Eigen::Index d =
      n == 0 ? 0 : static_cast<Eigen::Index>(list.docs[0].features.dim());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = list.docs[static_cast<size_t>(i)].features.values;
    for (Eigen::Index c = 0; c < d; ++c) x(i, c) = v[static_cast<size_t>(c)];
  }
  return x;
}

Eigen::VectorXd Ranker::Forward(const Eigen::MatrixXd& x, Cache* cache,
                                Rng* dropout_rng) const {
  const auto* mlp = std::get_if<MlpArchitecture>(&architecture_);
  if (cache) *cache = Cache{};
  Eigen::MatrixXd h = x;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (cache) cache->inputs.push_back(h);
    Eigen::MatrixXd pre = h * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    if (l + 1 == layers_.size()) return pre.col(0);
    h = pre.unaryExpr(
        [&](double v) { return Activate(mlp->activation, v); });
    Eigen::MatrixXd mask;
    if (dropout_rng && mlp->dropout > 0.0 && l >= 1) {
      const double keep = 1.0 - mlp->dropout;
      mask.resize(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = dropout_rng->Bernoulli(keep) ? 1.0 / keep : 0.0;
      }
      h = h.cwiseProduct(mask);
    }
    if (cache) {
      cache->pre.push_back(std::move(pre));
      cache->dropout_mask.push_back(std::move(mask));
    }
  }
  return h.col(0);
}

void Ranker::Backward(const Cache& cache, const Eigen::VectorXd& dscores,
                      std::vector<Layer>* grad) const {
  const auto* mlp = std::get_if<MlpArchitecture>(&architecture_);
  Eigen::MatrixXd delta = dscores;  // n x 1, d(loss)/d(pre) of current layer
  for (size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& in = cache.inputs[l];
    (*grad)[l].weight.noalias() += delta.transpose() * in;
    (*grad)[l].bias.noalias() += delta.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd dh = delta * layers_[l].weight;
    const Eigen::MatrixXd& mask = cache.dropout_mask[l - 1];
    if (mask.size() > 0) dh = dh.cwiseProduct(mask);
    const Eigen::MatrixXd& pre = cache.pre[l - 1];
    delta = dh.cwiseProduct(pre.unaryExpr(
        [&](double v) { return ActivateGrad(mlp->activation, v); }));
  }
}

std::vector<Layer> Ranker::ZeroGradient() const {
  std::vector<Layer> grad;
  for (const Layer& l : layers_) {
    grad.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                    Eigen::VectorXd::Zero(l.bias.size())});
  }
  return grad;
}

size_t Ranker::ParameterCount() const {
  size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

bool Ranker::AllFinite() const {
  for (const Layer& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Json Ranker::ToJson() const {
  Json arch;
  if (const auto* lin = std::get_if<LinearArchitecture>(&architecture_)) {
    arch = {{"type", "linear"}, {"dim", lin->dim}};
  } else {
    const auto& mlp = std::get<MlpArchitecture>(architecture_);
    arch = {{"type", "mlp"},
            {"input_dim", mlp.input_dim},
            {"hidden", mlp.hidden},
            {"activation", mlp.activation},
            {"dropout", mlp.dropout}};
  }
  Json layers = Json::array();
  for (const Layer& l : layers_) layers.push_back(LayerToJson(l));
  return Json{{"architecture", arch},
              {"layers", layers},
              {"meta", {{"steps", metadata_.steps}, {"seed", metadata_.seed}}}};
}

Ranker Ranker::FromJson(const Json& j) {
  const Json& arch = j.at("architecture");
  const std::string type = arch.at("type").get<std::string>();
  Ranker r;
  if (type == "linear") {
    r = Linear(arch.at("dim").get<size_t>());
  } else if (type == "mlp") {
    MlpArchitecture mlp;
    mlp.input_dim = arch.at("input_dim").get<size_t>();
    mlp.hidden = arch.at("hidden").get<std::vector<size_t>>();
    mlp.activation = arch.value("activation", "elu");
    mlp.dropout = arch.value("dropout", 0.0);
    r = Mlp(mlp, 0);
  } else {
    throw std::invalid_argument("unknown ranker type " + type);
  }
  const Json& layers = j.at("layers");
  if (layers.size() != r.layers_.size()) {
    throw std::invalid_argument("layer count does not match architecture");
  }
  for (size_t l = 0; l < layers.size(); ++l) {
    Layer layer = LayerFromJson(layers[l]);
    if (layer.weight.rows() != r.layers_[l].weight.rows() ||
        layer.weight.cols() != r.layers_[l].weight.cols()) {
      throw std::invalid_argument("layer shape does not match architecture");
    }
    r.layers_[l] = std::move(layer);
  }
  if (j.contains("meta")) {
    r.metadata_.steps = j["meta"].value("steps", int64_t{0});
    r.metadata_.seed = j["meta"].value("seed", uint64_t{0});
  }
  return r;
}

void Ranker::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << ToJson().dump(1) << '\n';
}

Ranker Ranker::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return FromJson(Json::parse(in));
}

bool Ranker::operator==(const Ranker& other) const {
  if (!(architecture_ == other.architecture_) ||
      layers_.size() != other.layers_.size()) {
    return false;
  }
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight != other.layers_[l].weight ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

}  // namespace cltr
