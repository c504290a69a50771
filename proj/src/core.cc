#include "cltr/core.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cltr {
namespace {

bool InUnit(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

void Require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

}  // namespace

bool FeatureVector::AllFinite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::vector<int> QueryList::Relevance() const {
  std::vector<int> rel;
  rel.reserve(docs.size());
  for (const Document& d : docs) rel.push_back(d.relevance);
  return rel;
}

int QueryList::RelevantCount() const {
  int n = 0;
  for (const Document& d : docs) n += d.relevance != 0;
  return n;
}

int Session::ClickCount() const {
  int n = 0;
  for (uint8_t c : clicks) n += c;
  return n;
}

ClickLog::ClickLog(std::vector<Session> sessions)
    : sessions_(std::move(sessions)) {
  for (size_t i = 0; i < sessions_.size(); ++i) {
    index_[sessions_[i].query_id].push_back(i);
  }
}

std::span<const size_t> ClickLog::SessionsFor(const QueryId& query_id) const {
  auto it = index_.find(query_id);
  if (it == index_.end()) return {};
  return it->second;
}

int64_t ClickLog::TotalClicks() const {
  int64_t n = 0;
  for (const Session& s : sessions_) n += s.ClickCount();
  return n;
}

std::pair<ClickLog, ClickLog> ClickLog::Split(size_t stride,
                                              size_t offset) const {
  Require(stride >= 1, "split stride must be >= 1");
  std::vector<Session> kept;
  std::vector<Session> held_out;
  for (size_t i = 0; i < sessions_.size(); ++i) {
    (i % stride == offset % stride ? held_out : kept).push_back(sessions_[i]);
  }
  return {ClickLog(std::move(kept)), ClickLog(std::move(held_out))};
}

// ---------------------------------------------------------------------------

PbmParams::PbmParams(std::vector<double> theta) : theta_(std::move(theta)) {
  Require(!theta_.empty(), "PBM theta must be non-empty");
  for (double t : theta_) {
    Require(std::isfinite(t) && t > 0.0 && t <= 1.0,
            "PBM theta values must lie in (0, 1]");
  }
}

PbmParams PbmParams::FromSchedule(double eta, size_t k) {
  Require(std::isfinite(eta) && eta >= 0.0, "eta must be >= 0");
  Require(k >= 1, "k must be >= 1");
  std::vector<double> theta(k);
  for (size_t j = 1; j <= k; ++j) {
    theta[j - 1] = std::pow(1.0 / static_cast<double>(j), eta);
  }
  return PbmParams(std::move(theta));
}

DcmParams::DcmParams(std::vector<double> lambda) : lambda_(std::move(lambda)) {
  Require(!lambda_.empty(), "DCM lambda must be non-empty");
  for (double l : lambda_) {
    Require(InUnit(l), "DCM lambda values must lie in [0, 1]");
  }
}

DcmParams DcmParams::FromSchedule(double beta, double eta, size_t k) {
  Require(InUnit(beta), "beta must lie in [0, 1]");
  Require(std::isfinite(eta) && eta >= 0.0, "eta must be >= 0");
  Require(k >= 1, "k must be >= 1");
  std::vector<double> lambda(k);
  for (size_t j = 1; j <= k; ++j) {
    lambda[j - 1] = beta * std::pow(1.0 / static_cast<double>(j), eta);
  }
  return DcmParams(std::move(lambda));
}

DbnParams::DbnParams(double gamma, SatisfactionMap satisfaction,
                     double default_satisfaction)
    : gamma_(gamma),
      satisfaction_(std::move(satisfaction)),
      default_satisfaction_(default_satisfaction) {
  Require(std::isfinite(gamma_) && gamma_ > 0.0 && gamma_ <= 1.0,
          "DBN gamma must lie in (0, 1]");
  Require(InUnit(default_satisfaction_),
          "DBN default satisfaction must lie in [0, 1]");
  for (const auto& [key, s] : satisfaction_) {
    Require(InUnit(s), "DBN satisfaction values must lie in [0, 1]");
  }
}

double DbnParams::Satisfaction(const QueryId& query_id,
                               const DocId& doc_id) const {
  auto it = satisfaction_.find({query_id, doc_id});
  return it == satisfaction_.end() ? default_satisfaction_ : it->second;
}

CcmParams::CcmParams(double alpha1, double alpha2, double alpha3)
    : alpha1_(alpha1), alpha2_(alpha2), alpha3_(alpha3) {
  Require(InUnit(alpha1_) && InUnit(alpha2_) && InUnit(alpha3_),
          "CCM alphas must lie in [0, 1]");
}

std::string ModelName(const ClickModelParams& params) {
  static constexpr const char* kNames[] = {"pbm", "dcm", "dbn", "ccm"};
  return kNames[params.index()];
}

bool IsCascade(const ClickModelParams& params) {
  return !std::holds_alternative<PbmParams>(params);
}

void NoiseSpec::Validate() const {
  Require(InUnit(p_click_given_examined_nonrelevant) &&
              InUnit(p_click_given_examined_relevant),
          "noise probabilities must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

ValidationReport ValidateDataset(std::span<const QueryList> dataset,
                                 std::optional<size_t> max_list_length) {
  ValidationReport report;
  report.query_count = dataset.size();
  std::optional<size_t> dim;
  std::set<QueryId> seen_queries;
  auto issue = [&](const QueryList& q, std::string message) {
    report.issues.push_back({q.query_id, std::move(message)});
  };
  for (const QueryList& q : dataset) {
    if (!seen_queries.insert(q.query_id).second) {
      issue(q, "duplicate query id");
    }
    if (q.docs.empty()) issue(q, "empty document list");
    if (max_list_length && q.docs.size() > *max_list_length) {
      issue(q, "list longer than k=" + std::to_string(*max_list_length));
    }
    std::set<DocId> seen_docs;
    for (const Document& d : q.docs) {
      if (!seen_docs.insert(d.doc_id).second) {
        issue(q, "duplicate doc id " + d.doc_id);
      }
      if (d.relevance != 0 && d.relevance != 1) {
        issue(q, "non-binary relevance for doc " + d.doc_id);
      }
      if (d.features.dim() == 0) {
        issue(q, "empty feature vector for doc " + d.doc_id);
      } else if (!dim) {
        dim = d.features.dim();
      } else if (*dim != d.features.dim()) {
        issue(q, "feature dim " + std::to_string(d.features.dim()) +
                     " differs from dataset dim " + std::to_string(*dim));
      }
      if (!d.features.AllFinite()) {
        issue(q, "non-finite feature for doc " + d.doc_id);
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const FeatureVector& v) { j = v.values; }
void from_json(const Json& j, FeatureVector& v) {
  v.values = j.get<std::vector<double>>();
}

void to_json(Json& j, const Document& d) {
  j = Json{{"id", d.doc_id}, {"rel", d.relevance}, {"x", d.features}};
}
void from_json(const Json& j, Document& d) {
  j.at("id").get_to(d.doc_id);
  j.at("rel").get_to(d.relevance);
  j.at("x").get_to(d.features);
}

void to_json(Json& j, const QueryList& q) {
  j = Json{{"qid", q.query_id}, {"docs", q.docs}};
}
void from_json(const Json& j, QueryList& q) {
  j.at("qid").get_to(q.query_id);
  j.at("docs").get_to(q.docs);
}

void to_json(Json& j, const Session& s) {
  std::vector<int> clicks(s.clicks.begin(), s.clicks.end());
  j = Json{{"qid", s.query_id}, {"clicks", clicks}};
  if (s.generator) j["gen"] = *s.generator;
  if (s.seed) j["seed"] = *s.seed;
}
void from_json(const Json& j, Session& s) {
  j.at("qid").get_to(s.query_id);
  s.clicks.clear();
  for (const Json& c : j.at("clicks")) {
    int v = c.get<int>();
    if (v != 0 && v != 1) throw std::invalid_argument("clicks must be 0 or 1");
    s.clicks.push_back(static_cast<uint8_t>(v));
  }
  s.generator.reset();
  s.seed.reset();
  if (j.contains("gen")) s.generator = j.at("gen").get<std::string>();
  if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
}

void to_json(Json& j, const NoiseSpec& n) {
  j = Json{{"nonrelevant", n.p_click_given_examined_nonrelevant},
           {"relevant", n.p_click_given_examined_relevant}};
}
void from_json(const Json& j, NoiseSpec& n) {
  n.p_click_given_examined_nonrelevant = j.value("nonrelevant", 0.05);
  n.p_click_given_examined_relevant = j.value("relevant", 1.0);
  n.Validate();
}

void to_json(Json& j, const PropensityVector& p) {
  std::vector<int> clipped(p.clipped.begin(), p.clipped.end());
  j = Json{{"values", p.values}, {"clipped", clipped}};
}
void from_json(const Json& j, PropensityVector& p) {
  j.at("values").get_to(p.values);
  auto clipped = j.at("clipped").get<std::vector<int>>();
  p.clipped.assign(clipped.begin(), clipped.end());
}

void to_json(Json& j, const PbmParams& p) { j = Json{{"theta", p.theta()}}; }
void from_json(const Json& j, PbmParams& p) {
  p = PbmParams(j.at("theta").get<std::vector<double>>());
}

void to_json(Json& j, const DcmParams& p) { j = Json{{"lambda", p.lambda()}}; }
void from_json(const Json& j, DcmParams& p) {
  p = DcmParams(j.at("lambda").get<std::vector<double>>());
}

void to_json(Json& j, const DbnParams& p) {
  Json entries = Json::array();
  for (const auto& [key, s] : p.satisfaction()) {
    entries.push_back({{"qid", key.first}, {"doc", key.second}, {"s", s}});
  }
  j = Json{{"gamma", p.gamma()},
           {"default_satisfaction", p.default_satisfaction()},
           {"satisfaction", entries}};
}
void from_json(const Json& j, DbnParams& p) {
  DbnParams::SatisfactionMap map;
  if (j.contains("satisfaction")) {
    for (const Json& e : j.at("satisfaction")) {
      map[{e.at("qid").get<std::string>(), e.at("doc").get<std::string>()}] =
          e.at("s").get<double>();
    }
  }
  p = DbnParams(j.at("gamma").get<double>(), std::move(map),
                j.value("default_satisfaction", 0.0));
}

void to_json(Json& j, const CcmParams& p) {
  j = Json{
      {"alpha1", p.alpha1()}, {"alpha2", p.alpha2()}, {"alpha3", p.alpha3()}};
}
void from_json(const Json& j, CcmParams& p) {
  p = CcmParams(j.at("alpha1").get<double>(), j.at("alpha2").get<double>(),
                j.at("alpha3").get<double>());
}

Json ClickModelParamsToJson(const ClickModelParams& params) {
  Json j = std::visit([](const auto& p) { return Json(p); }, params);
  j["model"] = ModelName(params);
  return j;
}

ClickModelParams ClickModelParamsFromJson(const Json& j) {
  const std::string model = j.at("model").get<std::string>();
  if (model == "pbm") return j.get<PbmParams>();
  if (model == "dcm") return j.get<DcmParams>();
  if (model == "dbn") return j.get<DbnParams>();
  if (model == "ccm") return j.get<CcmParams>();
  throw std::invalid_argument("unknown click model '" + model + "'");
}

void WriteClickLog(const std::string& path, const ClickLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Session& s : log.sessions()) out << Json(s).dump() << '\n';
}

ClickLog ReadClickLog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Session> sessions;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      sessions.push_back(Json::parse(line).get<Session>());
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return ClickLog(std::move(sessions));
}

}  // namespace cltr
