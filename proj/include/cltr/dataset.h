#ifndef CLTR_DATASET_H_
#define CLTR_DATASET_H_

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cltr/core.h"
#include "cltr/ranker.h"

namespace cltr {

// Queries as ingested, before the initial ranking is applied.
struct Dataset {
  std::vector<QueryList> queries;
  size_t feature_dim = 0;
};

struct RawDataset {
  std::vector<QueryList> train;
  std::vector<QueryList> test;
  size_t feature_dim = 0;
};

struct SplitProvenance {
  size_t input_queries = 0;
  size_t removed_no_relevant = 0;      // no relevant doc anywhere
  size_t removed_relevant_below_k = 0; // relevant docs exist, none in top-k
  size_t truncated_lists = 0;
  size_t kept_queries = 0;
};

struct Provenance {
  size_t k = kDefaultListLength;
  SplitProvenance train;
  SplitProvenance test;
};

// Initially ranked, truncated and filtered lists. Every list is ordered by the
// initial ranker's score (descending, ties by doc id) and holds at least one
// relevant document.
class PreparedDataset {
 public:
  PreparedDataset() = default;
  PreparedDataset(std::vector<QueryList> train, std::vector<QueryList> test,
                  size_t feature_dim, Provenance provenance);

  const std::vector<QueryList>& train() const { return train_; }
  const std::vector<QueryList>& test() const { return test_; }
  size_t feature_dim() const { return feature_dim_; }
  const Provenance& provenance() const { return provenance_; }
  size_t MaxListLength() const;

  // Training list for a logged query id, or null.
  const QueryList* FindTrain(const QueryId& query_id) const;

  RawDataset AsRaw() const { return {train_, test_, feature_dim_}; }

  bool operator==(const PreparedDataset& other) const {
    return train_ == other.train_ && test_ == other.test_ &&
           feature_dim_ == other.feature_dim_;
  }

 private:
  std::vector<QueryList> train_;
  std::vector<QueryList> test_;
  size_t feature_dim_ = 0;
  Provenance provenance_;
  std::unordered_map<QueryId, size_t> train_index_;
};

// Reads an SVMLight/LETOR file:
//   <label> qid:<id> <idx>:<val> ... # <doc_id>
// Labels >= relevance_threshold become relevant. Feature indices are 1-based;
// absent indices are zero. When `expected_dim` is given, an index beyond it
// is an error. Throws ParseError with the offending line number.
Dataset LoadLetor(const std::string& path, int relevance_threshold,
                  std::optional<size_t> expected_dim = {});
Dataset ParseLetor(std::istream& in, int relevance_threshold,
                   std::optional<size_t> expected_dim = {});
void WriteLetor(const std::string& path, const std::vector<QueryList>& queries);

// Synthetic stand-in for a licensed LETOR collection.
//
// Generative recipe. Two orthogonal unit directions w (document quality) and
// m (query effect) are drawn from the seed. Query q gets an effect
// v_q ~ N(0, 1); each of its documents gets quality u ~ N(0, 1) and features
//   x = u * w + query_shift * v_q * m + feature_noise * n,   n ~ N(0, I).
// The document is relevant iff
//   u + query_effect * v_q + label_noise * e > tau,           e ~ N(0, 1)
// with tau chosen so that P(relevant) = relevant_fraction exactly. Relevance
// is therefore a noisy monotone function of the linear score
// (w + query_effect / query_shift * m) . x. Within a query only the w part
// orders documents, so a pointwise fit across queries (the initial ranker)
// spends weight on m and ranks worse than a listwise learner.
struct SyntheticConfig {
  size_t n_queries = 1500;
  size_t docs_per_query = 40;
  size_t feature_dim = 16;
  double relevant_fraction = 0.1;
  uint64_t seed = 1;
  double label_noise = 0.5;
  double feature_noise = 0.5;
  double query_effect = 1.0;
  double query_shift = 0.5;
};

Dataset GenerateSynthetic(const SyntheticConfig& config);

// Deterministic train/test split of whole queries.
RawDataset SplitTrainTest(const Dataset& dataset, double test_fraction,
                          uint64_t seed);

// Pointwise ridge least-squares scorer fit on `n_queries_sample` training
// queries drawn without replacement. Throws std::invalid_argument on an empty
// or oversized sample.
Ranker TrainInitialRanker(const std::vector<QueryList>& train,
                          size_t n_queries_sample, uint64_t seed,
                          double ridge = 1.0);

// Orders each list by the initial ranker, truncates to k and drops queries
// without a relevant document in the top k. Lists shorter than k keep their
// natural length.
PreparedDataset Prepare(const RawDataset& raw, const Ranker& initial, size_t k);

// JSON Lines, one list per line with a "split" field; provenance as JSON.
void WritePrepared(const std::string& path, const PreparedDataset& data);
PreparedDataset ReadPrepared(const std::string& path);
Json ProvenanceToJson(const Provenance& provenance);

}  // namespace cltr

#endif  // CLTR_DATASET_H_
