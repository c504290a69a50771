// cltr-lab: command-line front end for the counterfactual LTR workbench.
//
//   prepare     LETOR file or synthetic data -> prepared JSONL + provenance
//   simulate    prepared data -> click log JSONL
//   propensity  click log -> propensity model JSON
//   train       prepared data (+ log, propensities) -> model JSON, curve CSV
//   evaluate    model + prepared data -> per-query nDCG@10 CSV
//   select      click log + candidate models -> chosen model by log-likelihood
//   run         experiment spec -> result directory
//   emit        result directory -> CSV + summary JSON
//
// Exit codes: 0 success, 1 failure (or partial failure for run), 2 invalid
// arguments or experiment spec.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cltr/clicksim.h"
#include "cltr/experiment.h"
#include "cltr/ltr.h"
#include "cltr/propensity.h"

namespace {

using cltr::Json;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

Json ReadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return Json::parse(in);
}

void WriteJsonFile(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

// Generator label shared by every session of the log, e.g. "dcm_0.6_1.0".
std::string LogLabel(const cltr::ClickLog& log) {
  std::string label;
  for (const cltr::Session& s : log.sessions()) {
    if (!s.generator) continue;
    if (label.empty()) {
      label = *s.generator;
    } else if (label != *s.generator) {
      throw std::invalid_argument("log mixes generators " + label + " and " +
                                  *s.generator);
    }
  }
  if (label.empty()) {
    throw std::invalid_argument("log carries no generator label; pass --sim");
  }
  return label;
}

size_t LogListLength(const cltr::ClickLog& log) {
  size_t k = 0;
  for (const cltr::Session& s : log.sessions()) k = std::max(k, s.clicks.size());
  return k;
}

// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string input, test_input, out, provenance;
  bool synthetic = false;
  cltr::SyntheticConfig synth;
  double test_fraction = 0.25;
  size_t k = cltr::kDefaultListLength;
  int threshold = 3;
  size_t init_sample = 50;
  uint64_t seed = 1;
};

int RunPrepare(const PrepareArgs& a) {
  cltr::DatasetSpec spec;
  if (a.synthetic) {
    spec.synthetic = a.synth;
  } else if (a.input.empty()) {
    std::cerr << "prepare: need --input or --synthetic\n";
    return kExitUsage;
  }
  spec.letor_train = a.input;
  spec.letor_test = a.test_input;
  spec.relevance_threshold = a.threshold;
  spec.test_fraction = a.test_fraction;
  spec.k = a.k;
  spec.init_sample = a.init_sample;
  const cltr::PreparedDataset data = cltr::BuildDataset(spec, a.seed);
  cltr::WritePrepared(a.out, data);
  const Json prov = cltr::ProvenanceToJson(data.provenance());
  WriteJsonFile(a.provenance.empty() ? a.out + ".provenance.json" : a.provenance,
                prov);
  std::cout << prov.dump() << '\n';
  return 0;
}

struct SimulateArgs {
  std::string data, model, out;
  double eta = 1.0, beta = 1.0, gamma = 0.9, s_rel = 0.7, s_nonrel = 0.1;
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0;
  double noise = 0.05;
  int64_t clicks = 200000;
  uint64_t seed = 1;
  bool keep_empty = false;
};

int RunSimulate(const SimulateArgs& a) {
  const cltr::PreparedDataset data = cltr::ReadPrepared(a.data);
  cltr::SimSetting setting{a.model, {}};
  if (a.model == "pbm") {
    setting.args = {a.eta};
  } else if (a.model == "dcm") {
    setting.args = {a.beta, a.eta};
  } else if (a.model == "dbn") {
    setting.args = {a.gamma, a.s_rel, a.s_nonrel};
  } else {
    setting.args = {a.alpha1, a.alpha2, a.alpha3};
  }
  cltr::SimulatorConfig config;
  config.params = setting.Params(data.MaxListLength(), &data);
  config.noise.p_click_given_examined_nonrelevant = a.noise;
  config.noise.Validate();
  config.seed = a.seed;
  config.target_clicks = a.clicks;
  config.keep_empty_sessions = a.keep_empty;
  config.label = setting.Label();
  const cltr::ClickLog log = cltr::SimulateLog(data, config);
  cltr::WriteClickLog(a.out, log);
  std::cout << "sessions=" << log.size() << " clicks=" << log.TotalClicks()
            << " label=" << config.label << '\n';
  return 0;
}

struct PropensityArgs {
  std::string method, log, out, data, sim;
  double noise = 0.05;
  double max_weight = 100.0;
  uint64_t seed = 1;
  int64_t dla_steps = 4000;
};

int RunPropensity(const PropensityArgs& a) {
  const cltr::ClickLog log = cltr::ReadClickLog(a.log);
  if (log.empty()) throw std::invalid_argument("empty click log");
  const size_t k = LogListLength(log);
  cltr::ClippingPolicy clipping{a.max_weight};
  clipping.Validate();
  std::optional<cltr::PreparedDataset> data;
  if (!a.data.empty()) data = cltr::ReadPrepared(a.data);
  auto need_data = [&]() -> const cltr::PreparedDataset& {
    if (!data) throw std::invalid_argument(a.method + " needs --data");
    return *data;
  };
  auto truth = [&] {
    const cltr::SimSetting s = cltr::ParseSimSetting(a.sim.empty() ? LogLabel(log) : a.sim);
    return s.Params(k, data ? &*data : nullptr);
  };

  Json out = {{"method", a.method}, {"clipping", {{"max_weight", a.max_weight}}}};
  cltr::ClickModelParams params;
  if (a.method == "pbm-oracle") {
    const cltr::ClickModelParams t = truth();
    if (std::holds_alternative<cltr::PbmParams>(t)) {
      params = t;
    } else {
      cltr::NoiseSpec noise;
      noise.p_click_given_examined_nonrelevant = a.noise;
      params = cltr::MarginalPbmTheta(t, need_data().train(), noise);
    }
    out["flags"] = std::vector<std::string>(k, "");
  } else if (a.method == "pbm-dla") {
    cltr::DlaConfig config;
    config.clipping = clipping;
    config.seed = a.seed;
    config.steps = a.dla_steps;
    const cltr::ThetaEstimate est = cltr::EstimatePbmDla(log, need_data(), config);
    params = cltr::PbmParams(est.theta);
    std::vector<std::string> flags;
    for (uint8_t u : est.unidentifiable) flags.push_back(u ? "unidentifiable" : "");
    out["flags"] = flags;
    out["support"] = est.support;
  } else if (a.method == "dcm-mle") {
    const cltr::LambdaEstimate est = cltr::MleDcmLambda(log, k);
    params = cltr::DcmParams(est.lambda);
    std::vector<std::string> flags;
    for (uint8_t u : est.imputed) flags.push_back(u ? "imputed" : "");
    out["flags"] = flags;
    out["support"] = est.support;
  } else if (a.method == "dcm-oracle" || a.method == "dbn-oracle" ||
             a.method == "ccm-oracle") {
    const std::string want = a.method.substr(0, 3);
    if (want == "dbn") need_data();
    params = truth();
    if (cltr::ModelName(params) != want) {
      throw std::invalid_argument(a.method + " on a " + cltr::ModelName(params) +
                                  " log");
    }
    out["flags"] = std::vector<std::string>(k, "");
  } else {
    std::cerr << "propensity: unknown method " << a.method << '\n';
    return kExitUsage;
  }
  out["params"] = cltr::ClickModelParamsToJson(params);
  WriteJsonFile(a.out, out);
  return 0;
}

struct TrainArgs {
  std::string mode, propensity, log, data, out, curve;
  std::string ccm_relevance = "oracle", normalizer = "exp-minmax";
  int64_t steps = cltr::TrainConfig{}.steps;
  double lr = cltr::TrainConfig{}.learning_rate;
  size_t batch = cltr::TrainConfig{}.batch_size;
  double max_grad_norm = 0.0;
  double max_weight = 100.0;
  int64_t eval_every = 0;
  uint64_t seed = 1;
  std::vector<size_t> hidden;
  std::string activation = "elu";
  double dropout = 0.0;
};

int RunTrain(const TrainArgs& a) {
  const cltr::PreparedDataset data = cltr::ReadPrepared(a.data);
  cltr::TrainConfig config;
  config.mode = cltr::ParseTrainMode(a.mode);
  config.steps = a.steps;
  config.learning_rate = a.lr;
  config.batch_size = a.batch;
  config.max_grad_norm = a.max_grad_norm;
  config.clipping.max_weight = a.max_weight;
  config.eval_every = a.eval_every;
  config.seed = a.seed;
  if (!a.hidden.empty()) {
    cltr::MlpArchitecture arch;
    arch.hidden = a.hidden;
    arch.activation = a.activation;
    arch.dropout = a.dropout;
    config.mlp = arch;
  }
  std::optional<cltr::ClickLog> log;
  if (!a.log.empty()) log = cltr::ReadClickLog(a.log);
  std::optional<cltr::PropensitySource> source;
  if (config.mode == cltr::TrainMode::kIps) {
    if (a.propensity.empty()) throw std::invalid_argument("ips mode needs --propensity");
    const Json j = ReadJsonFile(a.propensity);
    cltr::PropensitySource s{
        cltr::ClickModelParamsFromJson(j.contains("params") ? j.at("params") : j)};
    s.ccm_relevance = a.ccm_relevance == "ranker"
                          ? cltr::PropensitySource::CcmRelevance::kRanker
                          : cltr::PropensitySource::CcmRelevance::kOracle;
    s.ccm_normalizer = cltr::ParseNormalizer(a.normalizer);
    source = s;
  }
  const cltr::TrainResult result =
      cltr::Train(data, log ? &*log : nullptr, source, config);
  result.ranker.Save(a.out);
  if (!a.curve.empty()) cltr::WriteCurveCsv(a.curve, result.curve);
  std::printf("ndcg@10=%.6f\n", result.final_ndcg);
  return 0;
}

int RunEvaluate(const std::string& model, const std::string& data_path,
                const std::string& out_path) {
  const cltr::Ranker ranker = cltr::Ranker::Load(model);
  const cltr::PreparedDataset data = cltr::ReadPrepared(data_path);
  const cltr::EvalReport report = cltr::EvaluateRanker(ranker, data.test(), 10);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out << "query_id,ndcg10\n";
  char buf[64];
  for (const auto& [qid, v] : report.per_query) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    out << qid << ',' << buf << '\n';
  }
  std::printf("mean ndcg@10=%.6f over %zu queries\n", report.mean,
              report.per_query.size());
  return 0;
}

int RunSelect(const std::string& log_path, const std::string& candidates_path,
              const std::string& normalizer, const std::string& data_path,
              const std::string& model, const std::string& out_path) {
  const cltr::ClickLog log = cltr::ReadClickLog(log_path);
  const cltr::PreparedDataset data = cltr::ReadPrepared(data_path);
  const cltr::Ranker ranker = cltr::Ranker::Load(model);
  Json j = ReadJsonFile(candidates_path);
  if (j.is_object() && j.contains("candidates")) j = j.at("candidates");
  std::vector<cltr::Candidate> candidates;
  for (const Json& c : j) {
    const Json& p = c.contains("params") ? c.at("params") : c;
    candidates.push_back({cltr::ClickModelParamsFromJson(p),
                          c.value("label", cltr::ModelName(cltr::ClickModelParamsFromJson(p)))});
  }
  const cltr::Selection sel = cltr::SelectMethod(
      log, data, ranker, candidates, cltr::ParseNormalizer(normalizer));
  Json out = {{"chosen", sel.chosen}, {"ll", Json::object()}};
  for (const auto& [label, ll] : sel.log_likelihood) out["ll"][label] = ll;
  if (out_path.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    WriteJsonFile(out_path, out);
  }
  return 0;
}

int RunExperimentCommand(const std::string& spec_path, const std::string& out,
                         bool reuse) {
  cltr::ExperimentSpec spec;
  try {
    spec = cltr::LoadExperimentSpec(spec_path);
  } catch (const cltr::SpecError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kExitUsage;
  }
  const std::string dir = out.empty() ? spec.output_dir : out;
  cltr::RunOptions options;
  options.reuse_existing = reuse;
  const cltr::ExperimentResult result = cltr::RunExperiment(spec, dir, options);
  size_t failed = 0;
  for (const auto& c : result.cells) failed += !c.ok;
  for (const auto& c : result.skyline) failed += !c.ok;
  std::cout << result.cells.size() << " cells, " << result.skyline.size()
            << " skyline cells, " << failed << " failed\n";
  return failed ? kExitFailure : 0;
}

int RunEmit(const std::string& in, const std::string& csv) {
  const cltr::ExperimentResult result = cltr::LoadResults(in);
  cltr::EmitResults(in, result, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual learning-to-rank workbench"};
  app.require_subcommand(1);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Rank, truncate and filter a dataset");
  prepare->add_option("--input", prep.input, "LETOR/SVMLight training file");
  prepare->add_option("--test-input", prep.test_input, "Separate LETOR test file");
  prepare->add_flag("--synthetic", prep.synthetic, "Generate synthetic data instead");
  prepare->add_option("--n-queries", prep.synth.n_queries);
  prepare->add_option("--docs-per-query", prep.synth.docs_per_query);
  prepare->add_option("--feature-dim", prep.synth.feature_dim);
  prepare->add_option("--relevant-fraction", prep.synth.relevant_fraction);
  prepare->add_option("--data-seed", prep.synth.seed, "Synthetic generator seed");
  prepare->add_option("--test-fraction", prep.test_fraction);
  prepare->add_option("--k", prep.k)->capture_default_str();
  prepare->add_option("--threshold", prep.threshold)->capture_default_str();
  prepare->add_option("--init-sample", prep.init_sample)->capture_default_str();
  prepare->add_option("--seed", prep.seed)->capture_default_str();
  prepare->add_option("--out", prep.out, "Prepared JSONL")->required();
  prepare->add_option("--provenance", prep.provenance, "Provenance JSON path");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a click log");
  simulate->add_option("--data", sim.data, "Prepared JSONL")->required();
  simulate->add_option("--model", sim.model)
      ->required()
      ->check(CLI::IsMember({"pbm", "dcm", "dbn", "ccm"}));
  simulate->add_option("--eta", sim.eta)->capture_default_str();
  simulate->add_option("--beta", sim.beta)->capture_default_str();
  simulate->add_option("--gamma", sim.gamma)->capture_default_str();
  simulate->add_option("--s-rel", sim.s_rel, "DBN satisfaction, relevant docs")
      ->capture_default_str();
  simulate->add_option("--s-nonrel", sim.s_nonrel,
                       "DBN satisfaction, non-relevant docs")
      ->capture_default_str();
  simulate->add_option("--alpha1", sim.alpha1)->capture_default_str();
  simulate->add_option("--alpha2", sim.alpha2)->capture_default_str();
  simulate->add_option("--alpha3", sim.alpha3)->capture_default_str();
  simulate->add_option("--noise", sim.noise)->capture_default_str();
  simulate->add_option("--clicks", sim.clicks)->capture_default_str();
  simulate->add_option("--seed", sim.seed)->capture_default_str();
  simulate->add_flag("--keep-empty", sim.keep_empty, "Keep click-free sessions");
  simulate->add_option("--out", sim.out, "Click log JSONL")->required();

  PropensityArgs prop;
  auto* propensity = app.add_subcommand("propensity", "Build a propensity model");
  propensity->add_option("--method", prop.method)
      ->required()
      ->check(CLI::IsMember({"pbm-oracle", "pbm-dla", "dcm-oracle", "dcm-mle",
                             "dbn-oracle", "ccm-oracle"}));
  propensity->add_option("--log", prop.log)->required();
  propensity->add_option("--out", prop.out)->required();
  propensity->add_option("--data", prop.data,
                         "Prepared JSONL (pbm-dla, dbn-oracle, pbm-oracle on cascade logs)");
  propensity->add_option("--sim", prop.sim, "Generator label, if the log has none");
  propensity->add_option("--noise", prop.noise)->capture_default_str();
  propensity->add_option("--max-weight", prop.max_weight)->capture_default_str();
  propensity->add_option("--seed", prop.seed)->capture_default_str();
  propensity->add_option("--dla-steps", prop.dla_steps)->capture_default_str();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a ranker");
  train->add_option("--mode", tr.mode)
      ->required()
      ->check(CLI::IsMember({"ips", "no-ips", "full-info"}));
  train->add_option("--propensity", tr.propensity, "Propensity JSON");
  train->add_option("--log", tr.log, "Click log JSONL");
  train->add_option("--data", tr.data, "Prepared JSONL")->required();
  train->add_option("--steps", tr.steps)->capture_default_str();
  train->add_option("--lr", tr.lr)->capture_default_str();
  train->add_option("--batch", tr.batch)->capture_default_str();
  train->add_option("--max-grad-norm", tr.max_grad_norm)->capture_default_str();
  train->add_option("--max-weight", tr.max_weight)->capture_default_str();
  train->add_option("--eval-every", tr.eval_every)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--hidden", tr.hidden, "MLP hidden sizes, e.g. 32,16; empty for linear")
      ->delimiter(',');
  train->add_option("--activation", tr.activation)->capture_default_str();
  train->add_option("--dropout", tr.dropout)->capture_default_str();
  train->add_option("--ccm-relevance", tr.ccm_relevance)
      ->check(CLI::IsMember({"oracle", "ranker"}))
      ->capture_default_str();
  train->add_option("--normalizer", tr.normalizer)->capture_default_str();
  train->add_option("--out", tr.out, "Model JSON")->required();
  train->add_option("--curve", tr.curve, "Curve CSV");

  std::string ev_model, ev_data, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "Per-query nDCG@10 on the test split");
  evaluate->add_option("--model", ev_model)->required();
  evaluate->add_option("--data", ev_data)->required();
  evaluate->add_option("--out", ev_out)->required();

  std::string sel_log, sel_cand, sel_norm = "exp-minmax", sel_data, sel_model, sel_out;
  auto* select = app.add_subcommand("select", "Choose a propensity model by click log-likelihood");
  select->add_option("--log", sel_log)->required();
  select->add_option("--candidates", sel_cand)->required();
  select->add_option("--normalizer", sel_norm)
      ->check(CLI::IsMember({"softmax", "sigmoid", "exp-minmax"}))
      ->capture_default_str();
  select->add_option("--data", sel_data, "Prepared JSONL")->required();
  select->add_option("--model", sel_model, "Ranker supplying relevance")->required();
  select->add_option("--out", sel_out, "Output JSON (stdout if omitted)");

  std::string run_spec, run_out;
  bool run_reuse = false;
  auto* run = app.add_subcommand("run", "Run an experiment grid");
  run->add_option("--spec", run_spec)->required();
  run->add_option("--out", run_out, "Result directory (overrides the spec)");
  run->add_flag("--reuse", run_reuse, "Keep existing cell files");

  std::string emit_in, emit_csv;
  auto* emit = app.add_subcommand("emit", "Merge cell files into CSV and summary");
  emit->add_option("--in", emit_in)->required();
  emit->add_option("--csv", emit_csv, "Extra copy of the long CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*prepare) return RunPrepare(prep);
    if (*simulate) return RunSimulate(sim);
    if (*propensity) return RunPropensity(prop);
    if (*train) return RunTrain(tr);
    if (*evaluate) return RunEvaluate(ev_model, ev_data, ev_out);
    if (*select) return RunSelect(sel_log, sel_cand, sel_norm, sel_data, sel_model, sel_out);
    if (*run) return RunExperimentCommand(run_spec, run_out, run_reuse);
    if (*emit) return RunEmit(emit_in, emit_csv);
  } catch (const cltr::SpecError& e) {
    std::cerr << "spec error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
