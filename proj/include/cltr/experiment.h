// End-to-end experiment grid: click simulation settings x correction methods
// x repeats, each cell trained and evaluated on the same prepared data.
//
// Output layout under the result directory:
//   provenance.json                 dataset preparation counts
//   cells/<sim>__<method>__r<k>.json
//   cells/skyline__r<k>.json
//   cells/<...>.curve.csv           when train.eval_every > 0
//   selection/<sim>__r<k>.json      when selection normalizers are given
//   results.csv, skyline.csv, summary.json, manifest.json

#ifndef CLTR_EXPERIMENT_H_
#define CLTR_EXPERIMENT_H_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cltr/core.h"
#include "cltr/dataset.h"
#include "cltr/eval.h"
#include "cltr/ltr.h"
#include "cltr/propensity.h"

namespace cltr {

// Invalid experiment specification (exit code 2 in the CLI).
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A named click simulation setting:
//   pbm_<eta>                       theta_j = (1/j)^eta
//   dcm_<beta>_<eta>                lambda_j = beta (1/j)^eta
//   dbn_<gamma>_<s_rel>_<s_nonrel>  satisfaction by true relevance
//   ccm_<a1>_<a2>_<a3>
struct SimSetting {
  std::string model;
  std::vector<double> args;

  std::string Label() const;
  // Parameters for lists of length <= k. DBN needs the dataset to enumerate
  // (query, doc) satisfaction values.
  ClickModelParams Params(size_t k, const PreparedDataset* data = nullptr) const;
};

// Throws SpecError on an unknown model or a wrong argument count.
SimSetting ParseSimSetting(const std::string& label);

// Formats a parameter with at least one decimal: 1 -> "1.0", 0.25 -> "0.25".
std::string FormatParam(double value);

enum class Method { kNoIps, kPbmOracle, kPbmDla, kCmOracle, kCmMle };

// "no-ips", "pbm-ips-oracle", "pbm-ips-dla", "cm-ips-oracle", "cm-ips-mle".
Method ParseMethod(const std::string& name);
std::string MethodName(Method method);

struct DatasetSpec {
  std::optional<SyntheticConfig> synthetic;
  std::string letor_train;
  std::string letor_test;     // empty: split letor_train
  int relevance_threshold = 3;
  double test_fraction = 0.25;
  size_t k = kDefaultListLength;
  size_t init_sample = 50;
};

struct ExperimentSpec {
  DatasetSpec dataset;
  std::vector<std::string> sims;
  std::vector<Method> methods;
  int repeats = 15;
  int64_t clicks = 200000;
  uint64_t seed = 1;
  NoiseSpec noise;
  TrainConfig train;
  DlaConfig dla;
  std::vector<NormalizerKind> selection;
  std::string output_dir;

  // Throws SpecError.
  void Validate() const;
};

// Defaults: the six DCM and three PBM settings, and
// {no-ips, pbm-ips-oracle, cm-ips-oracle, cm-ips-mle}.
ExperimentSpec DefaultExperimentSpec();

// Missing fields keep their defaults. Throws SpecError on malformed input.
ExperimentSpec ParseExperimentSpec(const Json& j);
ExperimentSpec LoadExperimentSpec(const std::string& path);
Json ExperimentSpecToJson(const ExperimentSpec& spec);

PreparedDataset BuildDataset(const DatasetSpec& spec, uint64_t seed);

struct CellResult {
  std::string sim;     // "skyline" for full-information cells
  std::string method;  // "full-info" for skyline cells
  int repeat = 0;
  bool ok = false;
  double ndcg10 = 0.0;
  std::string error;
  Json propensity;     // parameters used for IPS, if any
  std::vector<double> per_query;  // test nDCG@10, test-list order

  std::string FileStem() const;
};

struct SelectionResult {
  std::string sim;
  int repeat = 0;
  // normalizer name -> chosen candidate label ("pbm" or "cm")
  std::map<std::string, std::string> chosen;
  std::map<std::string, std::map<std::string, double>> log_likelihood;
};

struct ExperimentResult {
  std::vector<CellResult> cells;    // sims x methods x repeats
  std::vector<CellResult> skyline;  // one per repeat
  std::vector<SelectionResult> selection;

  bool AllOk() const;
  // nDCG of the given (sim, method) across repeats, in repeat order; failed
  // cells are skipped.
  std::vector<double> Values(const std::string& sim,
                             const std::string& method) const;
};

struct RunOptions {
  // Keep cell files that already exist instead of recomputing them.
  bool reuse_existing = false;
  // Worker cap; 0 reads CLTR_LAB_THREADS, falling back to the core count.
  int threads = 0;
};

// Runs every cell, writes per-cell files, then the merged outputs and the
// manifest. Cell errors are recorded, not thrown.
ExperimentResult RunExperiment(const ExperimentSpec& spec,
                               const std::string& out_dir,
                               const RunOptions& options = {});

// Reads the cell files of a result directory.
ExperimentResult LoadResults(const std::string& dir);

// Long CSV: sim,method,repeat,ndcg10 (successful cells only).
void WriteResultsCsv(const std::string& path, const ExperimentResult& result);
// Per (sim, method): mean, std, n; skyline mean/std; pairwise paired-t
// p-values keyed both ways.
Json SummarizeResults(const ExperimentResult& result);
// Writes results.csv (or `csv_path`), skyline.csv, summary.json and
// manifest.json into `dir`.
void EmitResults(const std::string& dir, const ExperimentResult& result,
                 const std::string& csv_path = "");

// Lowercase hex SHA-256 of a file's bytes.
std::string Sha256File(const std::string& path);

// Checks that every file listed in dir/manifest.json exists and hashes to
// the recorded value. Returns the offending paths.
std::vector<std::string> VerifyManifest(const std::string& dir);

}  // namespace cltr

#endif  // CLTR_EXPERIMENT_H_
