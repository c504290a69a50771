// Click simulation under the position-based model and three cascade models.
//
// Every simulated user follows the examination hypothesis: an examined
// document is clicked with probability NoiseSpec::ClickProbability(r).
// Examination dynamics:
//   PBM  rank j examined independently with probability theta_j.
//   DCM  after no click, continue; after a click at j, continue w.p. lambda_j.
//   DBN  after a click, stop w.p. s (satisfied), else continue w.p. gamma;
//        after no click, continue w.p. gamma.
//   CCM  after no click, continue w.p. alpha1; after a click, continue w.p.
//        alpha2 * (1 - r) + alpha3 * r using the true relevance r.
// Noise clicks drive the cascade exactly like relevant clicks.

#ifndef CLTR_CLICKSIM_H_
#define CLTR_CLICKSIM_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cltr/core.h"
#include "cltr/dataset.h"
#include "cltr/random.h"

namespace cltr {

std::vector<double> PbmThetaSchedule(double eta, size_t k);
std::vector<double> DcmLambdaSchedule(double beta, double eta, size_t k);

// DBN satisfaction for every (query, doc) of the training lists, chosen by
// the document's relevance.
DbnParams DbnFromRelevance(const PreparedDataset& data, double gamma,
                           double s_relevant, double s_nonrelevant);

struct SimulatorConfig {
  ClickModelParams params;
  NoiseSpec noise;
  bool keep_empty_sessions = false;
  uint64_t seed = 0;
  int64_t target_clicks = 1;
  // simulate_log gives up after this many sessions; 0 picks
  // 1000 * target_clicks + 10000.
  int64_t max_sessions = 0;
  // Written into every session's "gen" field, e.g. "dcm_0.6_0.5".
  std::string label;
};

// Clicks together with the latent examination bits.
struct SessionTrace {
  std::vector<uint8_t> clicks;
  std::vector<uint8_t> examined;
};

// Throws std::invalid_argument when the parameter vector is shorter than the
// list.
SessionTrace SimulateTrace(const QueryList& list, const ClickModelParams& params,
                           const NoiseSpec& noise, Rng& rng);
// Same dynamics, except that an examined rank i < forced_prefix.size() takes
// the click value forced_prefix[i] instead of a draw. The fraction of such
// traces that reach rank j is the session-conditional examination
// probability of that prefix.
SessionTrace SimulateTrace(const QueryList& list, const ClickModelParams& params,
                           const NoiseSpec& noise, Rng& rng,
                           std::span<const uint8_t> forced_prefix);
Session SimulateSession(const QueryList& list, const SimulatorConfig& config,
                        Rng& rng);

// Samples training queries uniformly with replacement and simulates sessions
// until retained sessions hold at least target_clicks clicks. Session i uses
// the stream DeriveSeed(seed, i), recorded in its "seed" field. Throws
// std::runtime_error when max_sessions is exhausted first.
ClickLog SimulateLog(const PreparedDataset& data, const SimulatorConfig& config);

}  // namespace cltr

#endif  // CLTR_CLICKSIM_H_
