// Domain types shared by every stage of the workbench: feature vectors,
// ranked query lists, click sessions and logs, click-model parameters and
// propensity vectors. All of them are plain values; once built they are not
// mutated, so they can be shared freely across worker threads.

#ifndef CLTR_CORE_H_
#define CLTR_CORE_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace cltr {

using Json = nlohmann::json;
using QueryId = std::string;
using DocId = std::string;

// List length used throughout the top-k protocol.
inline constexpr size_t kDefaultListLength = 20;

// Raised when an input file cannot be parsed. Carries the 1-based line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

struct FeatureVector {
  std::vector<double> values;

  size_t dim() const { return values.size(); }
  bool AllFinite() const;
  bool operator==(const FeatureVector&) const = default;
};

struct Document {
  DocId doc_id;
  FeatureVector features;
  int relevance = 0;  // 0 or 1

  bool operator==(const Document&) const = default;
};

struct QueryList {
  QueryId query_id;
  std::vector<Document> docs;

  size_t size() const { return docs.size(); }
  std::vector<int> Relevance() const;
  int RelevantCount() const;
  bool operator==(const QueryList&) const = default;
};

struct Session {
  QueryId query_id;
  std::vector<uint8_t> clicks;
  std::optional<std::string> generator;
  std::optional<uint64_t> seed;

  int ClickCount() const;
  bool operator==(const Session&) const = default;
};

// Sessions plus a query index. Built once from a session vector.
class ClickLog {
 public:
  ClickLog() = default;
  explicit ClickLog(std::vector<Session> sessions);

  const std::vector<Session>& sessions() const { return sessions_; }
  size_t size() const { return sessions_.size(); }
  bool empty() const { return sessions_.empty(); }

  // Positions (into sessions()) of all sessions issued for `query_id`.
  std::span<const size_t> SessionsFor(const QueryId& query_id) const;
  size_t Count(const QueryId& query_id) const {
    return SessionsFor(query_id).size();
  }
  const std::map<QueryId, std::vector<size_t>>& index() const {
    return index_;
  }
  int64_t TotalClicks() const;

  // Splits off every `stride`-th session (offset `offset`) as a held-out log.
  std::pair<ClickLog, ClickLog> Split(size_t stride, size_t offset) const;

  bool operator==(const ClickLog& other) const {
    return sessions_ == other.sessions_;
  }

 private:
  std::vector<Session> sessions_;
  std::map<QueryId, std::vector<size_t>> index_;
};

// ---------------------------------------------------------------------------
// Click model parameters. Constructors validate ranges and throw
// std::invalid_argument, so any instance that exists is in range.

class PbmParams {
 public:
  PbmParams() : theta_{1.0} {}
  explicit PbmParams(std::vector<double> theta);
  // theta_j = (1/j)^eta for ranks j = 1..k.
  static PbmParams FromSchedule(double eta, size_t k);

  const std::vector<double>& theta() const { return theta_; }
  bool operator==(const PbmParams&) const = default;

 private:
  std::vector<double> theta_;
};

class DcmParams {
 public:
  DcmParams() : lambda_{1.0} {}
  explicit DcmParams(std::vector<double> lambda);
  // lambda_j = beta * (1/j)^eta for ranks j = 1..k.
  static DcmParams FromSchedule(double beta, double eta, size_t k);

  const std::vector<double>& lambda() const { return lambda_; }
  bool operator==(const DcmParams&) const = default;

 private:
  std::vector<double> lambda_;
};

class DbnParams {
 public:
  using SatisfactionMap = std::map<std::pair<QueryId, DocId>, double>;

  DbnParams() = default;
  DbnParams(double gamma, SatisfactionMap satisfaction,
            double default_satisfaction);

  double gamma() const { return gamma_; }
  double default_satisfaction() const { return default_satisfaction_; }
  const SatisfactionMap& satisfaction() const { return satisfaction_; }
  double Satisfaction(const QueryId& query_id, const DocId& doc_id) const;
  bool operator==(const DbnParams&) const = default;

 private:
  double gamma_ = 1.0;
  SatisfactionMap satisfaction_;
  double default_satisfaction_ = 0.0;
};

class CcmParams {
 public:
  CcmParams() = default;
  CcmParams(double alpha1, double alpha2, double alpha3);

  double alpha1() const { return alpha1_; }
  double alpha2() const { return alpha2_; }
  double alpha3() const { return alpha3_; }
  bool operator==(const CcmParams&) const = default;

 private:
  double alpha1_ = 1.0;
  double alpha2_ = 1.0;
  double alpha3_ = 1.0;
};

using ClickModelParams = std::variant<PbmParams, DcmParams, DbnParams, CcmParams>;

// "pbm", "dcm", "dbn" or "ccm".
std::string ModelName(const ClickModelParams& params);
bool IsCascade(const ClickModelParams& params);

// Per-position examination probabilities for one session. `clipped` marks
// positions where the clipping floor replaced the raw value.
struct PropensityVector {
  std::vector<double> values;
  std::vector<uint8_t> clipped;

  size_t size() const { return values.size(); }
  bool operator==(const PropensityVector&) const = default;
};

struct NoiseSpec {
  double p_click_given_examined_nonrelevant = 0.05;
  double p_click_given_examined_relevant = 1.0;

  // Throws std::invalid_argument when a probability is outside [0, 1].
  void Validate() const;
  double ClickProbability(int relevance) const {
    return relevance ? p_click_given_examined_relevant
                     : p_click_given_examined_nonrelevant;
  }
  bool operator==(const NoiseSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Dataset validation.

struct ValidationIssue {
  QueryId query_id;
  std::string message;
};

struct ValidationReport {
  size_t query_count = 0;
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
};

// Checks every list invariant. When `max_list_length` is set, lists longer
// than it are reported as well.
ValidationReport ValidateDataset(std::span<const QueryList> dataset,
                                 std::optional<size_t> max_list_length = {});

// ---------------------------------------------------------------------------
// JSON (de)serialization. Session uses the click-log line format
// {"qid", "clicks", "gen"?, "seed"?}.

void to_json(Json& j, const FeatureVector& v);
void from_json(const Json& j, FeatureVector& v);
void to_json(Json& j, const Document& d);
void from_json(const Json& j, Document& d);
void to_json(Json& j, const QueryList& q);
void from_json(const Json& j, QueryList& q);
void to_json(Json& j, const Session& s);
void from_json(const Json& j, Session& s);
void to_json(Json& j, const NoiseSpec& n);
void from_json(const Json& j, NoiseSpec& n);
void to_json(Json& j, const PropensityVector& p);
void from_json(const Json& j, PropensityVector& p);
void to_json(Json& j, const PbmParams& p);
void from_json(const Json& j, PbmParams& p);
void to_json(Json& j, const DcmParams& p);
void from_json(const Json& j, DcmParams& p);
void to_json(Json& j, const DbnParams& p);
void from_json(const Json& j, DbnParams& p);
void to_json(Json& j, const CcmParams& p);
void from_json(const Json& j, CcmParams& p);

// Tagged form {"model": "dcm", ...}.
Json ClickModelParamsToJson(const ClickModelParams& params);
ClickModelParams ClickModelParamsFromJson(const Json& j);

// JSON Lines click logs.
void WriteClickLog(const std::string& path, const ClickLog& log);
ClickLog ReadClickLog(const std::string& path);

}  // namespace cltr

#endif  // CLTR_CORE_H_
