#include "cltr/clicksim.h"

#include <stdexcept>

namespace cltr {
namespace {

void RequireCovers(size_t params_len, size_t list_len, const char* what) {
  if (params_len < list_len) {
    throw std::invalid_argument(std::string(what) + " has " +
                                std::to_string(params_len) +
                                " positions but the list has " +
                                std::to_string(list_len));
  }
}

}  // namespace

std::vector<double> PbmThetaSchedule(double eta, size_t k) {
  return PbmParams::FromSchedule(eta, k).theta();
}

std::vector<double> DcmLambdaSchedule(double beta, double eta, size_t k) {
  return DcmParams::FromSchedule(beta, eta, k).lambda();
}

DbnParams DbnFromRelevance(const PreparedDataset& data, double gamma,
                           double s_relevant, double s_nonrelevant) {
  DbnParams::SatisfactionMap map;
  for (const QueryList& q : data.train()) {
    for (const Document& d : q.docs) {
      map[{q.query_id, d.doc_id}] = d.relevance ? s_relevant : s_nonrelevant;
    }
  }
  return DbnParams(gamma, std::move(map), s_nonrelevant);
}

SessionTrace SimulateTrace(const QueryList& list, const ClickModelParams& params,
                           const NoiseSpec& noise, Rng& rng) {
  return SimulateTrace(list, params, noise, rng, {});
}

SessionTrace SimulateTrace(const QueryList& list, const ClickModelParams& params,
                           const NoiseSpec& noise, Rng& rng,
                           std::span<const uint8_t> forced_prefix) {
  const size_t n = list.size();
  SessionTrace trace{std::vector<uint8_t>(n, 0), std::vector<uint8_t>(n, 0)};
  auto click_if_examined = [&](size_t j) {
    trace.examined[j] = 1;
    trace.clicks[j] =
        j < forced_prefix.size()
            ? forced_prefix[j]
            : rng.Bernoulli(noise.ClickProbability(list.docs[j].relevance));
    return trace.clicks[j] != 0;
  };

  if (const auto* pbm = std::get_if<PbmParams>(&params)) {
    RequireCovers(pbm->theta().size(), n, "PBM theta");
    for (size_t j = 0; j < n; ++j) {
      if (rng.Bernoulli(pbm->theta()[j])) click_if_examined(j);
    }
    return trace;
  }
  if (const auto* dcm = std::get_if<DcmParams>(&params)) {
    RequireCovers(dcm->lambda().size(), n, "DCM lambda");
    for (size_t j = 0; j < n; ++j) {
      if (click_if_examined(j) && !rng.Bernoulli(dcm->lambda()[j])) break;
    }
    return trace;
  }
  if (const auto* dbn = std::get_if<DbnParams>(&params)) {
    for (size_t j = 0; j < n; ++j) {
      if (click_if_examined(j) &&
          rng.Bernoulli(dbn->Satisfaction(list.query_id, list.docs[j].doc_id))) {
        break;
      }
      if (!rng.Bernoulli(dbn->gamma())) break;
    }
    return trace;
  }
  const auto& ccm = std::get<CcmParams>(params);
  for (size_t j = 0; j < n; ++j) {
    double carry_on = ccm.alpha1();
    if (click_if_examined(j)) {
      carry_on = list.docs[j].relevance ? ccm.alpha3() : ccm.alpha2();
    }
    if (!rng.Bernoulli(carry_on)) break;
  }
  return trace;
}

Session SimulateSession(const QueryList& list, const SimulatorConfig& config,
                        Rng& rng) {
  Session s;
  s.query_id = list.query_id;
  s.clicks = SimulateTrace(list, config.params, config.noise, rng).clicks;
  if (!config.label.empty()) s.generator = config.label;
  return s;
}

ClickLog SimulateLog(const PreparedDataset& data,
                     const SimulatorConfig& config) {
  if (data.train().empty()) {
    throw std::invalid_argument("cannot simulate clicks on an empty dataset");
  }
  if (config.target_clicks <= 0) {
    throw std::invalid_argument("target_clicks must be positive");
  }
  config.noise.Validate();
  const int64_t cap = config.max_sessions > 0
                          ? config.max_sessions
                          : 1000 * config.target_clicks + 10000;
  std::vector<Session> sessions;
  int64_t clicks = 0;
  for (int64_t i = 0; clicks < config.target_clicks; ++i) {
    if (i >= cap) {
      throw std::runtime_error(
          "click target " + std::to_string(config.target_clicks) +
          " not reached after " + std::to_string(cap) + " sessions (" +
          std::to_string(clicks) + " clicks)");
    }
    const uint64_t seed = DeriveSeed(config.seed, static_cast<uint64_t>(i));
    Rng rng(seed);
    const QueryList& list = data.train()[rng.UniformIndex(data.train().size())];
    Session s = SimulateSession(list, config, rng);
    const int n = s.ClickCount();
    if (n == 0 && !config.keep_empty_sessions) continue;
    s.seed = seed;
    clicks += n;
    sessions.push_back(std::move(s));
  }
  return ClickLog(std::move(sessions));
}

}  // namespace cltr
