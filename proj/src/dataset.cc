#include "cltr/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "cltr/random.h"

namespace cltr {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// "docid = X ..." -> X; otherwise the first token.
std::string DocIdFromComment(const std::string& comment) {
  std::istringstream in(comment);
  std::string token;
  if (!(in >> token)) return "";
  if (token == "docid" || token.rfind("docid=", 0) == 0) {
    const auto eq = comment.find('=');
    if (eq == std::string::npos) return "";
    std::istringstream rest(comment.substr(eq + 1));
    std::string id;
    rest >> id;
    return id;
  }
  return token;
}

std::string PaddedId(char prefix, size_t index, int width) {
  std::ostringstream out;
  out << prefix << std::setw(width) << std::setfill('0') << index;
  return out.str();
}

std::vector<size_t> SampleWithoutReplacement(size_t n, size_t count, Rng& rng) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  for (size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + rng.UniformIndex(n - i)]);
  }
  idx.resize(count);
  return idx;
}

bool InitialOrder(const std::pair<double, const Document*>& a,
                  const std::pair<double, const Document*>& b) {
  if (a.first != b.first) return a.first > b.first;
  return a.second->doc_id < b.second->doc_id;
}

std::vector<QueryList> PrepareSplit(const std::vector<QueryList>& lists,
                                    const Ranker& initial, size_t k,
                                    SplitProvenance* prov) {
  std::vector<QueryList> out;
  prov->input_queries = lists.size();
  for (const QueryList& q : lists) {
    const std::vector<double> scores = initial.ScoreList(q);
    std::vector<std::pair<double, const Document*>> order;
    order.reserve(q.docs.size());
    for (size_t i = 0; i < q.docs.size(); ++i) {
      order.emplace_back(scores[i], &q.docs[i]);
    }
    std::sort(order.begin(), order.end(), InitialOrder);
    if (order.size() > k) {
      order.resize(k);
      ++prov->truncated_lists;
    }
    QueryList ranked{q.query_id, {}};
    for (const auto& [score, doc] : order) ranked.docs.push_back(*doc);
    if (ranked.RelevantCount() == 0) {
      if (q.RelevantCount() == 0) {
        ++prov->removed_no_relevant;
      } else {
        ++prov->removed_relevant_below_k;
      }
      continue;
    }
    out.push_back(std::move(ranked));
  }
  prov->kept_queries = out.size();
  return out;
}

Json SplitProvenanceToJson(const SplitProvenance& p) {
  return Json{{"input_queries", p.input_queries},
              {"removed_no_relevant", p.removed_no_relevant},
              {"removed_relevant_below_k", p.removed_relevant_below_k},
              {"truncated_lists", p.truncated_lists},
              {"kept_queries", p.kept_queries}};
}

}  // namespace

PreparedDataset::PreparedDataset(std::vector<QueryList> train,
                                 std::vector<QueryList> test,
                                 size_t feature_dim, Provenance provenance)
    : train_(std::move(train)),
      test_(std::move(test)),
      feature_dim_(feature_dim),
      provenance_(provenance) {
  for (size_t i = 0; i < train_.size(); ++i) {
    train_index_.emplace(train_[i].query_id, i);
  }
}

size_t PreparedDataset::MaxListLength() const {
  size_t n = 0;
  for (const auto* split : {&train_, &test_}) {
    for (const QueryList& q : *split) n = std::max(n, q.size());
  }
  return n;
}

const QueryList* PreparedDataset::FindTrain(const QueryId& query_id) const {
  auto it = train_index_.find(query_id);
  return it == train_index_.end() ? nullptr : &train_[it->second];
}

// ---------------------------------------------------------------------------

Dataset ParseLetor(std::istream& in, int relevance_threshold,
                   std::optional<size_t> expected_dim) {
  struct Row {
    QueryId qid;
    Document doc;
    std::vector<std::pair<size_t, double>> sparse;
  };
  std::vector<Row> rows;
  size_t max_index = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string comment;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      comment = Trim(std::string_view(line).substr(hash + 1));
      line.resize(hash);
    }
    if (Trim(line).empty()) continue;
    std::istringstream tokens(line);
    std::string token;
    tokens >> token;
    int label = 0;
    {
      auto [ptr, ec] =
          std::from_chars(token.data(), token.data() + token.size(), label);
      if (ec != std::errc() || ptr != token.data() + token.size() || label < 0) {
        throw ParseError("label '" + token + "' is not a non-negative integer",
                         line_no);
      }
    }
    Row row;
    row.doc.relevance = label >= relevance_threshold ? 1 : 0;
    if (!(tokens >> token) || token.rfind("qid:", 0) != 0 || token.size() == 4) {
      throw ParseError("expected qid:<id> after the label", line_no);
    }
    row.qid = token.substr(4);
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || colon == 0) {
        throw ParseError("malformed feature '" + token + "'", line_no);
      }
      size_t index = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + colon, index);
      if (ec != std::errc() || ptr != token.data() + colon || index == 0) {
        throw ParseError("feature index in '" + token + "' must be >= 1",
                         line_no);
      }
      double value = 0.0;
      try {
        size_t used = 0;
        value = std::stod(token.substr(colon + 1), &used);
        if (used != token.size() - colon - 1) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ParseError("malformed feature value in '" + token + "'", line_no);
      }
      if (!std::isfinite(value)) {
        throw ParseError("non-finite feature value in '" + token + "'",
                         line_no);
      }
      if (expected_dim && index > *expected_dim) {
        throw ParseError("feature index " + std::to_string(index) +
                             " exceeds dimension " +
                             std::to_string(*expected_dim),
                         line_no);
      }
      max_index = std::max(max_index, index);
      row.sparse.emplace_back(index, value);
    }
    row.doc.doc_id = DocIdFromComment(comment);
    if (row.doc.doc_id.empty()) row.doc.doc_id = "L" + std::to_string(line_no);
    rows.push_back(std::move(row));
  }

  Dataset data;
  data.feature_dim = expected_dim.value_or(max_index);
  std::unordered_map<QueryId, size_t> slot;
  for (Row& row : rows) {
    row.doc.features.values.assign(data.feature_dim, 0.0);
    for (const auto& [index, value] : row.sparse) {
      row.doc.features.values[index - 1] = value;
    }
    auto [it, inserted] = slot.emplace(row.qid, data.queries.size());
    if (inserted) data.queries.push_back({row.qid, {}});
    data.queries[it->second].docs.push_back(std::move(row.doc));
  }
  return data;
}

Dataset LoadLetor(const std::string& path, int relevance_threshold,
                  std::optional<size_t> expected_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return ParseLetor(in, relevance_threshold, expected_dim);
}

void WriteLetor(const std::string& path, const std::vector<QueryList>& queries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (const QueryList& q : queries) {
    for (const Document& d : q.docs) {
      out << d.relevance << " qid:" << q.query_id;
      for (size_t i = 0; i < d.features.dim(); ++i) {
        out << ' ' << (i + 1) << ':' << d.features.values[i];
      }
      out << " # " << d.doc_id << '\n';
    }
  }
}

// ---------------------------------------------------------------------------

Dataset GenerateSynthetic(const SyntheticConfig& c) {
  if (c.n_queries == 0 || c.docs_per_query == 0 || c.feature_dim < 2) {
    throw std::invalid_argument(
        "synthetic counts must be positive and feature_dim >= 2");
  }
  if (!(c.relevant_fraction > 0.0 && c.relevant_fraction < 1.0)) {
    throw std::invalid_argument("relevant_fraction must lie in (0, 1)");
  }
  const size_t d = c.feature_dim;
  Rng shared(DeriveSeed(c.seed, uint64_t{0}));
  auto unit = [&](const std::vector<double>* orthogonal_to) {
    std::vector<double> v(d);
    for (double& a : v) a = shared.Normal();
    if (orthogonal_to) {
      double dot = 0.0;
      for (size_t a = 0; a < d; ++a) dot += v[a] * (*orthogonal_to)[a];
      for (size_t a = 0; a < d; ++a) v[a] -= dot * (*orthogonal_to)[a];
    }
    double norm = 0.0;
    for (double a : v) norm += a * a;
    norm = std::sqrt(norm);
    for (double& a : v) a /= norm;
    return v;
  };
  const std::vector<double> quality_dir = unit(nullptr);
  const std::vector<double> query_dir = unit(&quality_dir);
  const boost::math::normal_distribution<double> std_normal;
  const double tau =
      std::sqrt(1.0 + c.query_effect * c.query_effect +
                c.label_noise * c.label_noise) *
      boost::math::quantile(std_normal, 1.0 - c.relevant_fraction);

  Dataset data;
  data.feature_dim = d;
  data.queries.reserve(c.n_queries);
  for (size_t q = 0; q < c.n_queries; ++q) {
    Rng rng(DeriveSeed(c.seed, q + 1));
    const double effect = rng.Normal();
    QueryList list{PaddedId('q', q, 6), {}};
    list.docs.reserve(c.docs_per_query);
    for (size_t i = 0; i < c.docs_per_query; ++i) {
      const double quality = rng.Normal();
      Document doc;
      doc.doc_id = PaddedId('d', i, 4);
      doc.features.values.resize(d);
      for (size_t a = 0; a < d; ++a) {
        doc.features.values[a] = quality * quality_dir[a] +
                                 c.query_shift * effect * query_dir[a] +
                                 c.feature_noise * rng.Normal();
      }
      const double latent =
          quality + c.query_effect * effect + c.label_noise * rng.Normal();
      doc.relevance = latent > tau ? 1 : 0;
      list.docs.push_back(std::move(doc));
    }
    data.queries.push_back(std::move(list));
  }
  return data;
}

RawDataset SplitTrainTest(const Dataset& dataset, double test_fraction,
                          uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1)");
  }
  const size_t n = dataset.queries.size();
  const size_t n_test = static_cast<size_t>(
      std::llround(test_fraction * static_cast<double>(n)));
  Rng rng(DeriveSeed(seed, HashLabel("split")));
  std::vector<size_t> test_idx = SampleWithoutReplacement(n, n_test, rng);
  std::vector<uint8_t> is_test(n, 0);
  for (size_t i : test_idx) is_test[i] = 1;
  RawDataset raw;
  raw.feature_dim = dataset.feature_dim;
  for (size_t i = 0; i < n; ++i) {
    (is_test[i] ? raw.test : raw.train).push_back(dataset.queries[i]);
  }
  return raw;
}

Ranker TrainInitialRanker(const std::vector<QueryList>& train,
                          size_t n_queries_sample, uint64_t seed,
                          double ridge) {
  if (n_queries_sample == 0) {
    throw std::invalid_argument("initial ranker sample is empty");
  }
  if (n_queries_sample > train.size()) {
    throw std::invalid_argument("initial ranker sample of " +
                                std::to_string(n_queries_sample) +
                                " exceeds " + std::to_string(train.size()) +
                                " available queries");
  }
  Rng rng(DeriveSeed(seed, HashLabel("initial-ranker")));
  const std::vector<size_t> sample =
      SampleWithoutReplacement(train.size(), n_queries_sample, rng);
  size_t dim = 0;
  size_t rows = 0;
  for (size_t q : sample) {
    rows += train[q].docs.size();
    if (!train[q].docs.empty()) dim = train[q].docs[0].features.dim();
  }
  if (rows == 0 || dim == 0) {
    throw std::invalid_argument("initial ranker sample has no documents");
  }
  // Augmented design [x, 1]; the intercept is not penalized.
  const Eigen::Index p = static_cast<Eigen::Index>(dim) + 1;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), p);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (size_t q : sample) {
    for (const Document& doc : train[q].docs) {
      if (doc.features.dim() != dim) {
        throw std::invalid_argument("inconsistent feature dim in sample");
      }
      for (size_t a = 0; a < dim; ++a) {
        x(r, static_cast<Eigen::Index>(a)) = doc.features.values[a];
      }
      x(r, p - 1) = 1.0;
      y(r) = doc.relevance;
      ++r;
    }
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().head(p - 1).array() += ridge;
  const Eigen::VectorXd beta = gram.ldlt().solve(x.transpose() * y);

  Ranker ranker = Ranker::Linear(dim);
  ranker.layers()[0].weight.row(0) = beta.head(p - 1).transpose();
  ranker.layers()[0].bias(0) = beta(p - 1);
  ranker.metadata().seed = seed;
  return ranker;
}

PreparedDataset Prepare(const RawDataset& raw, const Ranker& initial,
                        size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  Provenance prov;
  prov.k = k;
  auto train = PrepareSplit(raw.train, initial, k, &prov.train);
  auto test = PrepareSplit(raw.test, initial, k, &prov.test);
  return PreparedDataset(std::move(train), std::move(test), raw.feature_dim,
                         prov);
}

Json ProvenanceToJson(const Provenance& p) {
  return Json{{"k", p.k},
              {"train", SplitProvenanceToJson(p.train)},
              {"test", SplitProvenanceToJson(p.test)}};
}

void WritePrepared(const std::string& path, const PreparedDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const char* split : {"train", "test"}) {
    const auto& lists =
        std::string(split) == "train" ? data.train() : data.test();
    for (const QueryList& q : lists) {
      Json j = q;
      j["split"] = split;
      out << j.dump() << '\n';
    }
  }
}

PreparedDataset ReadPrepared(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<QueryList> train;
  std::vector<QueryList> test;
  size_t dim = 0;
  size_t k = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      QueryList q = j.get<QueryList>();
      if (!q.docs.empty()) dim = q.docs[0].features.dim();
      k = std::max(k, q.size());
      (j.value("split", "train") == "test" ? test : train).push_back(std::move(q));
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  Provenance prov;
  prov.k = k;
  prov.train.input_queries = prov.train.kept_queries = train.size();
  prov.test.input_queries = prov.test.kept_queries = test.size();
  return PreparedDataset(std::move(train), std::move(test), dim, prov);
}

}  // namespace cltr
