#include "cltr/experiment.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <openssl/evp.h>

#include "cltr/clicksim.h"
#include "cltr/random.h"

namespace cltr {
namespace fs = std::filesystem;
namespace {

constexpr const char* kSkyline = "skyline";
constexpr const char* kFullInfo = "full-info";

std::string ShortestDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void WriteText(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T Get(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw SpecError(std::string("field '") + key + "': " + e.what());
  }
}

int WorkerCount(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CLTR_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Every task writes its own files; the index is the only shared state.
void RunParallel(size_t n_tasks, int workers,
                 const std::function<void(size_t)>& task) {
  std::atomic<size_t> next{0};
  auto loop = [&] {
    for (size_t i = next++; i < n_tasks; i = next++) task(i);
  };
  const int n = std::min<int>(workers, static_cast<int>(n_tasks));
  if (n <= 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(loop);
  for (std::thread& t : pool) t.join();
}

Json CellToJson(const CellResult& c) {
  Json j = {{"sim", c.sim},
            {"method", c.method},
            {"repeat", c.repeat},
            {"status", c.ok ? "ok" : "failed"}};
  if (c.ok) {
    j["ndcg10"] = c.ndcg10;
    j["per_query"] = c.per_query;
  } else {
    j["error"] = c.error;
  }
  if (!c.propensity.is_null()) j["propensity"] = c.propensity;
  return j;
}

CellResult CellFromJson(const Json& j) {
  CellResult c;
  c.sim = j.at("sim").get<std::string>();
  c.method = j.at("method").get<std::string>();
  c.repeat = j.at("repeat").get<int>();
  c.ok = j.at("status").get<std::string>() == "ok";
  if (c.ok) {
    c.ndcg10 = j.at("ndcg10").get<double>();
    c.per_query = j.value("per_query", std::vector<double>{});
  } else {
    c.error = j.value("error", "");
  }
  if (j.contains("propensity")) c.propensity = j.at("propensity");
  return c;
}

Json SelectionToJson(const SelectionResult& s) {
  return {{"sim", s.sim},
          {"repeat", s.repeat},
          {"chosen", s.chosen},
          {"log_likelihood", s.log_likelihood}};
}

SelectionResult SelectionFromJson(const Json& j) {
  SelectionResult s;
  s.sim = j.at("sim").get<std::string>();
  s.repeat = j.at("repeat").get<int>();
  s.chosen = j.at("chosen").get<std::map<std::string, std::string>>();
  s.log_likelihood = j.at("log_likelihood")
                         .get<std::map<std::string, std::map<std::string, double>>>();
  return s;
}

std::string SelectionStem(const std::string& sim, int repeat) {
  return sim + "__r" + std::to_string(repeat);
}

void WriteCell(const fs::path& dir, const CellResult& cell) {
  WriteText(dir / "cells" / (cell.FileStem() + ".json"),
            CellToJson(cell).dump(2) + "\n");
}

void FinishCell(CellResult* cell, const TrainResult& trained,
                const PreparedDataset& data) {
  const EvalReport report = EvaluateRanker(trained.ranker, data.test(), 10);
  cell->ok = true;
  cell->ndcg10 = report.mean;
  for (const auto& [qid, v] : report.per_query) cell->per_query.push_back(v);
}

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double SampleStd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Json Stats(const std::vector<double>& v) {
  return {{"mean", Mean(v)}, {"std", SampleStd(v)}, {"n", v.size()}};
}

}  // namespace

// ---------------------------------------------------------------------------
// Simulation settings and methods.

std::string FormatParam(double value) {
  std::string s = ShortestDouble(value);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string SimSetting::Label() const {
  std::string s = model;
  for (double a : args) s += "_" + FormatParam(a);
  return s;
}

ClickModelParams SimSetting::Params(size_t k, const PreparedDataset* data) const {
  try {
    if (model == "pbm") return PbmParams::FromSchedule(args[0], k);
    if (model == "dcm") return DcmParams::FromSchedule(args[0], args[1], k);
    if (model == "ccm") return CcmParams(args[0], args[1], args[2]);
    if (model == "dbn") {
      if (!data) throw std::invalid_argument("DBN settings need the dataset");
      return DbnFromRelevance(*data, args[0], args[1], args[2]);
    }
  } catch (const std::invalid_argument& e) {
    throw SpecError(Label() + ": " + e.what());
  }
  throw SpecError("unknown click model '" + model + "'");
}

SimSetting ParseSimSetting(const std::string& label) {
  SimSetting s;
  std::stringstream ss(label);
  std::string part;
  std::getline(ss, s.model, '_');
  while (std::getline(ss, part, '_')) {
    double v = 0.0;
    const auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size()) {
      throw SpecError("bad number '" + part + "' in sim label '" + label + "'");
    }
    s.args.push_back(v);
  }
  size_t want = 0;
  if (s.model == "pbm") {
    want = 1;
  } else if (s.model == "dcm") {
    want = 2;
  } else if (s.model == "dbn" || s.model == "ccm") {
    want = 3;
  } else {
    throw SpecError("unknown click model in sim label '" + label + "'");
  }
  if (s.args.size() != want) {
    throw SpecError("sim label '" + label + "' needs " + std::to_string(want) +
                    " parameters");
  }
  return s;
}

Method ParseMethod(const std::string& name) {
  if (name == "no-ips") return Method::kNoIps;
  if (name == "pbm-ips-oracle" || name == "pbm-ips") return Method::kPbmOracle;
  if (name == "pbm-ips-dla") return Method::kPbmDla;
  if (name == "cm-ips-oracle" || name == "cm-ips") return Method::kCmOracle;
  if (name == "cm-ips-mle") return Method::kCmMle;
  throw SpecError("unknown method '" + name + "'");
}

std::string MethodName(Method method) {
  switch (method) {
    case Method::kNoIps:
      return "no-ips";
    case Method::kPbmOracle:
      return "pbm-ips-oracle";
    case Method::kPbmDla:
      return "pbm-ips-dla";
    case Method::kCmOracle:
      return "cm-ips-oracle";
    case Method::kCmMle:
      return "cm-ips-mle";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Spec.

void ExperimentSpec::Validate() const {
  if (repeats < 1) throw SpecError("repeats must be >= 1");
  if (clicks < 1) throw SpecError("clicks must be >= 1");
  if (sims.empty()) throw SpecError("no click simulation settings");
  if (methods.empty()) throw SpecError("no correction methods");
  std::set<std::string> seen;
  for (const std::string& s : sims) {
    ParseSimSetting(s);
    if (!seen.insert(s).second) throw SpecError("duplicate sim '" + s + "'");
  }
  std::set<Method> seen_methods(methods.begin(), methods.end());
  if (seen_methods.size() != methods.size()) {
    throw SpecError("duplicate correction method");
  }
  if (!dataset.synthetic && dataset.letor_train.empty()) {
    throw SpecError("dataset needs either a synthetic config or a LETOR file");
  }
  if (dataset.k == 0) throw SpecError("k must be positive");
  if (dataset.test_fraction <= 0.0 || dataset.test_fraction >= 1.0) {
    if (dataset.letor_test.empty()) {
      throw SpecError("test_fraction must lie in (0, 1)");
    }
  }
  if (train.learning_rate <= 0.0 || train.batch_size == 0 || train.steps < 1) {
    throw SpecError("train needs lr > 0, batch >= 1 and steps >= 1");
  }
  try {
    noise.Validate();
    train.clipping.Validate();
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what());
  }
}

ExperimentSpec DefaultExperimentSpec() {
  ExperimentSpec spec;
  spec.dataset.synthetic = SyntheticConfig{};
  spec.sims = {"dcm_0.6_0.5", "dcm_0.6_1.0", "dcm_0.6_2.0",
               "dcm_1.0_0.5", "dcm_1.0_1.0", "dcm_1.0_2.0",
               "pbm_0.5",     "pbm_1.0",     "pbm_2.0"};
  spec.methods = {Method::kNoIps, Method::kPbmOracle, Method::kCmOracle,
                  Method::kCmMle};
  spec.output_dir = "results";
  return spec;
}

ExperimentSpec ParseExperimentSpec(const Json& j) {
  if (!j.is_object()) throw SpecError("experiment spec must be a JSON object");
  ExperimentSpec spec = DefaultExperimentSpec();

  if (j.contains("dataset")) {
    const Json& d = j.at("dataset");
    DatasetSpec& ds = spec.dataset;
    if (d.contains("letor")) {
      const Json& l = d.at("letor");
      ds.synthetic.reset();
      ds.letor_train = Get<std::string>(l, "train", "");
      ds.letor_test = Get<std::string>(l, "test", "");
      ds.relevance_threshold = Get<int>(l, "threshold", 3);
    } else if (d.contains("synthetic")) {
      const Json& s = d.at("synthetic");
      SyntheticConfig c;
      c.n_queries = Get<size_t>(s, "n_queries", c.n_queries);
      c.docs_per_query = Get<size_t>(s, "docs_per_query", c.docs_per_query);
      c.feature_dim = Get<size_t>(s, "feature_dim", c.feature_dim);
      c.relevant_fraction = Get<double>(s, "relevant_fraction", c.relevant_fraction);
      c.seed = Get<uint64_t>(s, "seed", c.seed);
      c.label_noise = Get<double>(s, "label_noise", c.label_noise);
      c.feature_noise = Get<double>(s, "feature_noise", c.feature_noise);
      c.query_effect = Get<double>(s, "query_effect", c.query_effect);
      c.query_shift = Get<double>(s, "query_shift", c.query_shift);
      ds.synthetic = c;
    }
    ds.test_fraction = Get<double>(d, "test_fraction", ds.test_fraction);
    ds.k = Get<size_t>(d, "k", ds.k);
    ds.init_sample = Get<size_t>(d, "init_sample", ds.init_sample);
  }
  if (j.contains("sims")) spec.sims = Get<std::vector<std::string>>(j, "sims", {});
  if (j.contains("methods")) {
    spec.methods.clear();
    for (const std::string& m : Get<std::vector<std::string>>(j, "methods", {})) {
      spec.methods.push_back(ParseMethod(m));
    }
  }
  spec.repeats = Get<int>(j, "repeats", spec.repeats);
  spec.clicks = Get<int64_t>(j, "clicks", spec.clicks);
  spec.seed = Get<uint64_t>(j, "seed", spec.seed);
  spec.noise.p_click_given_examined_nonrelevant =
      Get<double>(j, "noise", spec.noise.p_click_given_examined_nonrelevant);
  spec.train.clipping.max_weight =
      Get<double>(j, "max_weight", spec.train.clipping.max_weight);
  if (j.contains("train")) {
    const Json& t = j.at("train");
    TrainConfig& tc = spec.train;
    tc.steps = Get<int64_t>(t, "steps", tc.steps);
    tc.learning_rate = Get<double>(t, "lr", tc.learning_rate);
    tc.batch_size = Get<size_t>(t, "batch", tc.batch_size);
    tc.max_grad_norm = Get<double>(t, "max_grad_norm", tc.max_grad_norm);
    tc.eval_every = Get<int64_t>(t, "eval_every", tc.eval_every);
    if (t.contains("mlp")) {
      const Json& m = t.at("mlp");
      MlpArchitecture arch;
      arch.hidden = Get<std::vector<size_t>>(m, "hidden", {});
      arch.activation = Get<std::string>(m, "activation", arch.activation);
      arch.dropout = Get<double>(m, "dropout", arch.dropout);
      tc.mlp = arch;
    }
  }
  if (j.contains("dla")) {
    const Json& d = j.at("dla");
    spec.dla.steps = Get<int64_t>(d, "steps", spec.dla.steps);
    spec.dla.batch_size = Get<size_t>(d, "batch", spec.dla.batch_size);
    spec.dla.ranker_learning_rate = Get<double>(d, "ranker_lr", spec.dla.ranker_learning_rate);
    spec.dla.propensity_learning_rate =
        Get<double>(d, "propensity_lr", spec.dla.propensity_learning_rate);
  }
  spec.dla.clipping = spec.train.clipping;
  if (j.contains("selection")) {
    spec.selection.clear();
    for (const std::string& n : Get<std::vector<std::string>>(j, "selection", {})) {
      try {
        spec.selection.push_back(ParseNormalizer(n));
      } catch (const std::invalid_argument& e) {
        throw SpecError(e.what());
      }
    }
  }
  spec.output_dir = Get<std::string>(j, "output", spec.output_dir);
  spec.Validate();
  return spec;
}

ExperimentSpec LoadExperimentSpec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open spec " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SpecError(path + ": " + e.what());
  }
  return ParseExperimentSpec(j);
}

Json ExperimentSpecToJson(const ExperimentSpec& spec) {
  Json j;
  const DatasetSpec& ds = spec.dataset;
  Json d = {{"test_fraction", ds.test_fraction},
            {"k", ds.k},
            {"init_sample", ds.init_sample}};
  if (ds.synthetic) {
    const SyntheticConfig& c = *ds.synthetic;
    d["synthetic"] = {{"n_queries", c.n_queries},
                      {"docs_per_query", c.docs_per_query},
                      {"feature_dim", c.feature_dim},
                      {"relevant_fraction", c.relevant_fraction},
                      {"seed", c.seed},
                      {"label_noise", c.label_noise},
                      {"feature_noise", c.feature_noise},
                      {"query_effect", c.query_effect},
                      {"query_shift", c.query_shift}};
  } else {
    d["letor"] = {{"train", ds.letor_train},
                  {"test", ds.letor_test},
                  {"threshold", ds.relevance_threshold}};
  }
  j["dataset"] = d;
  j["sims"] = spec.sims;
  std::vector<std::string> methods;
  for (Method m : spec.methods) methods.push_back(MethodName(m));
  j["methods"] = methods;
  j["repeats"] = spec.repeats;
  j["clicks"] = spec.clicks;
  j["seed"] = spec.seed;
  j["noise"] = spec.noise.p_click_given_examined_nonrelevant;
  j["max_weight"] = spec.train.clipping.max_weight;
  Json t = {{"steps", spec.train.steps},
            {"lr", spec.train.learning_rate},
            {"batch", spec.train.batch_size},
            {"max_grad_norm", spec.train.max_grad_norm},
            {"eval_every", spec.train.eval_every}};
  if (spec.train.mlp) {
    t["mlp"] = {{"hidden", spec.train.mlp->hidden},
                {"activation", spec.train.mlp->activation},
                {"dropout", spec.train.mlp->dropout}};
  }
  j["train"] = t;
  j["dla"] = {{"steps", spec.dla.steps},
              {"batch", spec.dla.batch_size},
              {"ranker_lr", spec.dla.ranker_learning_rate},
              {"propensity_lr", spec.dla.propensity_learning_rate}};
  std::vector<std::string> sel;
  for (NormalizerKind n : spec.selection) sel.push_back(NormalizerName(n));
  j["selection"] = sel;
  j["output"] = spec.output_dir;
  return j;
}

PreparedDataset BuildDataset(const DatasetSpec& spec, uint64_t seed) {
  RawDataset raw;
  if (spec.synthetic) {
    raw = SplitTrainTest(GenerateSynthetic(*spec.synthetic), spec.test_fraction,
                         DeriveSeed(seed, HashLabel("split")));
  } else {
    Dataset train = LoadLetor(spec.letor_train, spec.relevance_threshold);
    if (spec.letor_test.empty()) {
      raw = SplitTrainTest(train, spec.test_fraction,
                           DeriveSeed(seed, HashLabel("split")));
    } else {
      Dataset test = LoadLetor(spec.letor_test, spec.relevance_threshold,
                               train.feature_dim);
      raw = {std::move(train.queries), std::move(test.queries), train.feature_dim};
    }
  }
  const Ranker initial = TrainInitialRanker(
      raw.train, std::min(spec.init_sample, raw.train.size()),
      DeriveSeed(seed, HashLabel("initial-ranker")));
  return Prepare(raw, initial, spec.k);
}

// ---------------------------------------------------------------------------
// Results.

std::string CellResult::FileStem() const {
  if (sim == kSkyline) return std::string(kSkyline) + "__r" + std::to_string(repeat);
  return sim + "__" + method + "__r" + std::to_string(repeat);
}

bool ExperimentResult::AllOk() const {
  for (const CellResult& c : cells) {
    if (!c.ok) return false;
  }
  for (const CellResult& c : skyline) {
    if (!c.ok) return false;
  }
  return true;
}

std::vector<double> ExperimentResult::Values(const std::string& sim,
                                             const std::string& method) const {
  std::vector<const CellResult*> hits;
  const auto& pool = sim == kSkyline ? skyline : cells;
  for (const CellResult& c : pool) {
    if (c.ok && c.sim == sim && (sim == kSkyline || c.method == method)) {
      hits.push_back(&c);
    }
  }
  std::sort(hits.begin(), hits.end(), [](const CellResult* a, const CellResult* b) {
    return a->repeat < b->repeat;
  });
  std::vector<double> v;
  for (const CellResult* c : hits) v.push_back(c->ndcg10);
  return v;
}

ExperimentResult RunExperiment(const ExperimentSpec& spec,
                               const std::string& out_dir,
                               const RunOptions& options) {
  spec.Validate();
  const fs::path dir(out_dir);
  fs::create_directories(dir / "cells");

  WriteText(dir / "spec.json", ExperimentSpecToJson(spec).dump(2) + "\n");
  const PreparedDataset data = BuildDataset(spec.dataset, spec.seed);
  WriteText(dir / "provenance.json",
            ProvenanceToJson(data.provenance()).dump(2) + "\n");
  const size_t k = spec.dataset.k;

  std::vector<SimSetting> settings;
  for (const std::string& s : spec.sims) settings.push_back(ParseSimSetting(s));

  ExperimentResult result;
  for (int r = 0; r < spec.repeats; ++r) {
    CellResult sky;
    sky.sim = kSkyline;
    sky.method = kFullInfo;
    sky.repeat = r;
    result.skyline.push_back(sky);
    for (const SimSetting& s : settings) {
      for (Method m : spec.methods) {
        CellResult c;
        c.sim = s.Label();
        c.method = MethodName(m);
        c.repeat = r;
        result.cells.push_back(c);
      }
      if (!spec.selection.empty()) {
        SelectionResult sel;
        sel.sim = s.Label();
        sel.repeat = r;
        result.selection.push_back(sel);
      }
    }
  }

  auto reuse = [&](CellResult* cell) {
    const fs::path path = dir / "cells" / (cell->FileStem() + ".json");
    if (!options.reuse_existing || !fs::exists(path)) return false;
    *cell = CellFromJson(Json::parse(ReadText(path)));
    return true;
  };
  auto curve_path = [&](const CellResult& cell) {
    return (dir / "cells" / (cell.FileStem() + ".curve.csv")).string();
  };

  // One task per skyline repeat and per (sim, repeat) pair; the pair's log is
  // shared by all of its methods.
  const size_t n_sims = settings.size();
  const size_t n_methods = spec.methods.size();
  const size_t n_tasks = static_cast<size_t>(spec.repeats) * (1 + n_sims);
  auto task = [&](size_t t) {
    const int r = static_cast<int>(t / (1 + n_sims));
    const size_t slot = t % (1 + n_sims);
    if (slot == 0) {
      CellResult& cell = result.skyline[static_cast<size_t>(r)];
      if (reuse(&cell)) return;
      try {
        TrainConfig tc = spec.train;
        tc.mode = TrainMode::kFullInfo;
        tc.seed = DeriveSeed(spec.seed, {HashLabel("skyline"), static_cast<uint64_t>(r)});
        const TrainResult trained = Train(data, nullptr, std::nullopt, tc);
        FinishCell(&cell, trained, data);
        if (tc.eval_every > 0) WriteCurveCsv(curve_path(cell), trained.curve);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      WriteCell(dir, cell);
      return;
    }

    const size_t si = slot - 1;
    const SimSetting& setting = settings[si];
    const std::string label = setting.Label();
    const size_t base = (static_cast<size_t>(r) * n_sims + si) * n_methods;
    std::vector<CellResult*> todo;
    for (size_t m = 0; m < n_methods; ++m) {
      CellResult* cell = &result.cells[base + m];
      if (!reuse(cell)) todo.push_back(cell);
    }
    SelectionResult* sel = nullptr;
    if (!spec.selection.empty()) {
      sel = &result.selection[static_cast<size_t>(r) * n_sims + si];
      const fs::path path = dir / "selection" / (SelectionStem(label, r) + ".json");
      if (options.reuse_existing && fs::exists(path)) {
        *sel = SelectionFromJson(Json::parse(ReadText(path)));
        sel = nullptr;
      }
    }
    if (todo.empty() && !sel) return;

    const uint64_t pair_seed =
        DeriveSeed(spec.seed, {HashLabel(label), static_cast<uint64_t>(r)});
    ClickModelParams truth;
    ClickLog log;
    try {
      truth = setting.Params(k, &data);
      SimulatorConfig sim;
      sim.params = truth;
      sim.noise = spec.noise;
      sim.seed = DeriveSeed(pair_seed, HashLabel("clicks"));
      sim.target_clicks = spec.clicks;
      sim.label = label;
      log = SimulateLog(data, sim);
    } catch (const std::exception& e) {
      for (CellResult* cell : todo) {
        cell->error = std::string("simulation: ") + e.what();
        WriteCell(dir, *cell);
      }
      return;
    }

    // Propensity models, built on first use.
    std::optional<ClickModelParams> pbm_oracle, cm_oracle;
    auto get_pbm_oracle = [&]() -> const ClickModelParams& {
      if (!pbm_oracle) {
        if (std::holds_alternative<PbmParams>(truth)) {
          pbm_oracle = truth;
        } else {
          pbm_oracle = MarginalPbmTheta(truth, data.train(), spec.noise);
        }
      }
      return *pbm_oracle;
    };
    auto get_cm_oracle = [&]() -> const ClickModelParams& {
      if (!cm_oracle) {
        if (IsCascade(truth)) {
          cm_oracle = truth;
        } else {
          cm_oracle = DcmParams(MleDcmLambda(log, k).lambda);
        }
      }
      return *cm_oracle;
    };

    TrainConfig tc = spec.train;
    tc.seed = DeriveSeed(pair_seed, HashLabel("train"));
    for (CellResult* cell : todo) {
      try {
        const Method method = ParseMethod(cell->method);
        std::optional<PropensitySource> source;
        switch (method) {
          case Method::kNoIps:
            break;
          case Method::kPbmOracle:
            source = PropensitySource{get_pbm_oracle()};
            break;
          case Method::kPbmDla: {
            DlaConfig dla = spec.dla;
            dla.seed = DeriveSeed(pair_seed, HashLabel("dla"));
            source = PropensitySource{PbmParams(EstimatePbmDla(log, data, dla).theta)};
            break;
          }
          case Method::kCmOracle:
            source = PropensitySource{get_cm_oracle()};
            break;
          case Method::kCmMle:
            source = PropensitySource{DcmParams(MleDcmLambda(log, k).lambda)};
            break;
        }
        tc.mode = source ? TrainMode::kIps : TrainMode::kNoIps;
        if (source) cell->propensity = ClickModelParamsToJson(source->params);
        const TrainResult trained = Train(data, &log, source, tc);
        FinishCell(cell, trained, data);
        if (tc.eval_every > 0) WriteCurveCsv(curve_path(*cell), trained.curve);
      } catch (const std::exception& e) {
        cell->ok = false;
        cell->error = e.what();
      }
      WriteCell(dir, *cell);
    }

    if (sel) {
      // Candidates are scored on every 10th session with a naive ranker fit
      // on the rest.
      try {
        auto [fit, held_out] = log.Split(10, 0);
        TrainConfig naive = spec.train;
        naive.mode = TrainMode::kNoIps;
        naive.seed = DeriveSeed(pair_seed, HashLabel("selection"));
        naive.eval_every = 0;
        const Ranker ranker = Train(data, &fit, std::nullopt, naive).ranker;
        const std::vector<Candidate> candidates = {{get_pbm_oracle(), "pbm"},
                                                   {get_cm_oracle(), "cm"}};
        for (NormalizerKind n : spec.selection) {
          const Selection s = SelectMethod(held_out, data, ranker, candidates, n);
          sel->chosen[NormalizerName(n)] = s.chosen;
          for (const auto& [name, ll] : s.log_likelihood) {
            sel->log_likelihood[NormalizerName(n)][name] = ll;
          }
        }
      } catch (const std::exception& e) {
        sel->chosen["error"] = e.what();
      }
      WriteText(dir / "selection" / (SelectionStem(label, r) + ".json"),
                SelectionToJson(*sel).dump(2) + "\n");
    }
  };
  RunParallel(n_tasks, WorkerCount(options.threads), task);

  EmitResults(out_dir, result);
  return result;
}

ExperimentResult LoadResults(const std::string& dir) {
  ExperimentResult result;
  const fs::path cells = fs::path(dir) / "cells";
  if (!fs::is_directory(cells)) {
    throw std::runtime_error("no cells directory under " + dir);
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cells)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    CellResult c = CellFromJson(Json::parse(ReadText(f)));
    (c.sim == kSkyline ? result.skyline : result.cells).push_back(std::move(c));
  }
  auto order = [](const CellResult& a, const CellResult& b) {
    return std::tie(a.repeat, a.sim, a.method) < std::tie(b.repeat, b.sim, b.method);
  };
  std::sort(result.cells.begin(), result.cells.end(), order);
  std::sort(result.skyline.begin(), result.skyline.end(), order);
  const fs::path sel = fs::path(dir) / "selection";
  if (fs::is_directory(sel)) {
    files.clear();
    for (const auto& e : fs::directory_iterator(sel)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
      result.selection.push_back(SelectionFromJson(Json::parse(ReadText(f))));
    }
  }
  return result;
}

void WriteResultsCsv(const std::string& path, const ExperimentResult& result) {
  std::ostringstream out;
  out << "sim,method,repeat,ndcg10\n";
  for (const CellResult& c : result.cells) {
    if (!c.ok) continue;
    out << c.sim << ',' << c.method << ',' << c.repeat << ','
        << ShortestDouble(c.ndcg10) << '\n';
  }
  WriteText(path, out.str());
}

Json SummarizeResults(const ExperimentResult& result) {
  std::vector<std::string> sims, methods;
  for (const CellResult& c : result.cells) {
    if (std::find(sims.begin(), sims.end(), c.sim) == sims.end()) sims.push_back(c.sim);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) {
      methods.push_back(c.method);
    }
  }
  Json summary;
  summary["sims"] = Json::object();
  for (const std::string& s : sims) {
    Json entry;
    entry["methods"] = Json::object();
    entry["p_values"] = Json::object();
    for (const std::string& m : methods) {
      entry["methods"][m] = Stats(result.Values(s, m));
    }
    for (size_t a = 0; a < methods.size(); ++a) {
      for (size_t b = a + 1; b < methods.size(); ++b) {
        const std::vector<double> va = result.Values(s, methods[a]);
        const std::vector<double> vb = result.Values(s, methods[b]);
        if (va.size() != vb.size() || va.size() < 2) continue;
        const double p = PairedTTest(va, vb).p;
        entry["p_values"][methods[a]][methods[b]] = p;
        entry["p_values"][methods[b]][methods[a]] = p;
      }
    }
    summary["sims"][s] = entry;
  }
  summary["skyline"] = Stats(result.Values(kSkyline, kFullInfo));
  if (!result.selection.empty()) {
    Json sel = Json::object();
    for (const SelectionResult& s : result.selection) {
      for (const auto& [normalizer, chosen] : s.chosen) {
        Json& counts = sel[s.sim][normalizer];
        if (!counts.contains(chosen)) counts[chosen] = 0;
        counts[chosen] = counts[chosen].get<int>() + 1;
      }
    }
    summary["selection"] = sel;
  }
  size_t failed = 0;
  for (const CellResult& c : result.cells) failed += !c.ok;
  for (const CellResult& c : result.skyline) failed += !c.ok;
  summary["failed_cells"] = failed;
  return summary;
}

void EmitResults(const std::string& dir, const ExperimentResult& result,
                 const std::string& csv_path) {
  if (result.cells.empty() && result.skyline.empty()) {
    throw std::invalid_argument("no results to emit");
  }
  const fs::path root(dir);
  WriteResultsCsv((root / "results.csv").string(), result);
  if (!csv_path.empty()) WriteResultsCsv(csv_path, result);
  {
    std::ostringstream out;
    out << "repeat,ndcg10\n";
    for (const CellResult& c : result.skyline) {
      if (c.ok) out << c.repeat << ',' << ShortestDouble(c.ndcg10) << '\n';
    }
    WriteText(root / "skyline.csv", out.str());
  }
  WriteText(root / "summary.json", SummarizeResults(result).dump(2) + "\n");

  Json manifest;
  Json files = Json::array();
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root);
    if (rel == "manifest.json") continue;
    paths.push_back(rel);
  }
  std::sort(paths.begin(), paths.end());
  for (const fs::path& rel : paths) {
    files.push_back({{"path", rel.generic_string()},
                     {"sha256", Sha256File((root / rel).string())},
                     {"bytes", fs::file_size(root / rel)}});
  }
  manifest["files"] = files;
  Json cells = Json::array();
  auto add = [&](const CellResult& c) {
    Json e = {{"cell", c.FileStem()}, {"status", c.ok ? "ok" : "failed"}};
    if (!c.ok) e["error"] = c.error;
    cells.push_back(e);
  };
  for (const CellResult& c : result.skyline) add(c);
  for (const CellResult& c : result.cells) add(c);
  manifest["cells"] = cells;
  WriteText(root / "manifest.json", manifest.dump(2) + "\n");
}

std::string Sha256File(const std::string& path) {
  const std::string bytes = ReadText(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed for " + path);
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0')
        << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<std::string> VerifyManifest(const std::string& dir) {
  const Json manifest = Json::parse(ReadText(fs::path(dir) / "manifest.json"));
  std::vector<std::string> bad;
  for (const Json& f : manifest.at("files")) {
    const std::string rel = f.at("path").get<std::string>();
    const fs::path p = fs::path(dir) / rel;
    if (!fs::exists(p) || Sha256File(p.string()) != f.at("sha256").get<std::string>()) {
      bad.push_back(rel);
    }
  }
  return bad;
}

}  // namespace cltr
