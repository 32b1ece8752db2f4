#include "mstack/cli.hpp"

#include "mstack/experiments.hpp"
#include "mstack/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace mstack {

namespace {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::DataError:
    case ErrorCode::SingularDesign:
    case ErrorCode::StudyTooSmall:
    case ErrorCode::FoldTooSmall:
      return kExitData;
    case ErrorCode::NotConverged:
    case ErrorCode::NonFiniteObjective:
      return kExitNotConverged;
    default:
      return kExitConfig;
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_real(const std::string& s, const std::string& flag) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, flag + ": '" + s + "' is not a number");
  }
}

// Re-raises a parse failure as a config error naming the offending flag.
template <typename F>
auto for_flag(const std::string& flag, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, flag + ": " + e.what());
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MSTACK_SEED")) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ConfigError, "MSTACK_SEED: '" + std::string(env) + "' is not a seed");
  }
  throw Error(ErrorCode::ConfigError, "--seed is required (or set MSTACK_SEED)");
}

FeasibleSet parse_constraint(const std::string& s) {
  if (s == "simplex") return FeasibleSet::simplex();
  if (s == "free") return FeasibleSet::free();
  if (s.rfind("box:", 0) == 0) {
    const auto parts = split(s.substr(4), ',');
    if (parts.size() != 2)
      throw Error(ErrorCode::ConfigError, "--constraint: expected box:L,U");
    return for_flag("--constraint", [&] {
      return FeasibleSet::box(parse_real(parts[0], "--constraint"),
                              parse_real(parts[1], "--constraint"));
    });
  }
  throw Error(ErrorCode::ConfigError, "--constraint: unknown constraint '" + s + "'");
}

Task parse_task(const std::string& s, const StudyCollection& c) {
  if (s == "generalist") return Task::generalist();
  if (s.rfind("specialist:", 0) == 0) {
    const std::string key = s.substr(11);
    for (Index k = 0; k < c.K(); ++k)
      if (c[k].id == key) return Task::specialist_of(k);
    try {
      std::size_t pos = 0;
      const long v = std::stol(key, &pos);
      if (pos == key.size() && v >= 1 && v <= c.K()) return Task::specialist_of(v - 1);
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ConfigError, "--task: unknown study '" + key + "'");
  }
  throw Error(ErrorCode::ConfigError, "--task: expected generalist or specialist:K");
}

std::vector<LearnerSpec> parse_learners(const std::vector<std::string>& raw) {
  std::vector<LearnerSpec> out;
  for (const auto& r : raw)
    for (const auto& s : split(r, ',')) out.push_back(parse_learner(s));
  if (out.empty()) throw Error(ErrorCode::ConfigError, "--learner: none given");
  return out;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// The manifest is written before any result and rewritten when the run ends.
class Manifest {
 public:
  Manifest(const std::string& out_dir, const std::string& command,
           const std::vector<std::string>& argv)
      : path_((fs::path(out_dir) / "manifest.json").string()),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_dir);
    j_["command"] = command;
    j_["argv"] = argv;
    j_["version"] = kVersion;
    j_["started"] = utc_now();
    j_["status"] = "running";
    j_["config"] = Json::object();
    j_["outputs"] = Json::array();
  }
  Json& config() { return j_["config"]; }
  void set(const std::string& key, Json v) { j_[key] = std::move(v); }
  void write() { write_json_file(path_, j_); }
  void finish(const std::string& status, const std::vector<std::string>& outputs) {
    j_["status"] = status;
    Json o = Json::array();
    for (const auto& f : outputs) o.push_back(fs::path(f).filename().string());
    j_["outputs"] = o;
    j_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write();
  }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  Json j_;
  std::chrono::steady_clock::time_point start_;
};

struct FitArgs {
  std::string data, task = "generalist", method = "dr", constraint = "simplex",
                    cs_mode = "fixed-nu", lambda, lts = "study-specific", out;
  std::vector<std::string> learners{"mean"};
  Index folds = 5, repeats = 1;
  std::optional<std::uint64_t> seed;
  bool table = false;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(a.seed);
  StackConfig cfg;
  cfg.method = parse_method(a.method);
  cfg.cs_mode = parse_cs_mode(a.cs_mode);
  cfg.learners = parse_learners(a.learners);
  cfg.feasible = parse_constraint(a.constraint);
  cfg.folds = a.folds;
  cfg.repeats = a.repeats;
  cfg.seed = seed;
  if (!a.lambda.empty()) {
    if (a.lambda == "auto") {
      cfg.lambda.kind = LambdaChoice::Kind::Auto;
    } else {
      cfg.lambda.kind = LambdaChoice::Kind::Fixed;
      cfg.lambda.value = parse_real(a.lambda, "--lambda");
    }
  }

  Manifest man(a.out, "fit", argv);
  man.set("seed", seed);
  Json& c = man.config();
  c["data"] = a.data;
  c["task"] = a.task;
  c["method"] = to_string(cfg.method);
  c["learners"] = Json::array();
  for (const auto& l : cfg.learners) c["learners"].push_back(to_string(l));
  c["constraint"] = to_string(cfg.feasible);
  c["folds"] = cfg.folds;
  c["repeats"] = cfg.repeats;
  c["cs_mode"] = to_string(cfg.cs_mode);
  c["lambda"] = a.lambda.empty() ? Json(nullptr) : Json(a.lambda);
  c["lts"] = a.lts;
  man.write();

  const StudyCollection coll = read_collection(a.data);
  cfg.task = parse_task(a.task, coll);
  if (a.lts == "pooled") {
    cfg.lts.kind = LtsDescriptor::Kind::Pooled;
  } else if (a.lts != "study-specific") {
    cfg.lts.kind = LtsDescriptor::Kind::Explicit;
    cfg.lts.sets = lts_from_json(read_json_file(a.lts), coll);
  }
  Json ids = Json::array();
  for (Index k = 0; k < coll.K(); ++k) ids.push_back(coll[k].id);
  man.set("study_index", ids);
  man.write();

  const StackedModel model = fit(cfg, coll);
  std::vector<std::string> outputs;
  const std::string wpath = (fs::path(a.out) / "weights.json").string();
  write_json_file(wpath, model_to_json(model, coll));
  outputs.push_back(wpath);
  if (a.table) {
    const std::string tpath = (fs::path(a.out) / "fitted.csv").string();
    CsvWriter t(tpath, {"study", "i", "y", "fitted"});
    for (Index k = 0; k < coll.K(); ++k) {
      const Vec f = predict_stacked(model, coll[k].X);
      for (Index i = 0; i < coll.n(k); ++i)
        t.cell(coll[k].id).cell(static_cast<long long>(i + 1)).cell(coll[k].y(i)).cell(f(i))
            .end_row();
    }
    outputs.push_back(tpath);
  }
  if (!model.report.converged) {
    std::cerr << "error: solver did not converge (KKT residual "
              << format_double(model.report.kkt_residual) << "); partial report written\n";
    man.finish("not-converged", outputs);
    return kExitNotConverged;
  }
  man.finish("complete", outputs);
  return kExitOk;
}

struct SimArgs {
  std::string scenario, params, methods = "dr,cvcs", out, learner;
  Index replicates = 1, folds = 5;
  std::optional<Index> K, n, p;
  std::optional<double> sigma, sigma_beta;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool export_data = false;
};

// Limit slopes and intercepts of each SPF (L per study) under the truth.
void limit_functions(const std::vector<LearnerSpec>& specs, const TruthBundle& t, Mat& B, Vec& a) {
  const Index K = t.mu.size(), L = static_cast<Index>(specs.size()), p = t.beta.rows();
  B = Mat::Zero(p, K * L);
  a = Vec::Zero(K * L);
  for (Index k = 0; k < K; ++k)
    for (Index l = 0; l < L; ++l) {
      if (specs[l].kind == LearnerSpec::Kind::MeanOnly)
        a(k * L + l) = t.mu(k);
      else
        B.col(k * L + l) = t.beta.col(k);
    }
}

int cmd_simulate(const SimArgs& a, const std::vector<std::string>& argv) {
  const std::uint64_t seed = resolve_seed(a.seed);
  Scenario s;
  s.kind = parse_scenario(a.scenario);
  if (s.kind == ScenarioKind::Ex1) {
    s.p = 0;
    s.n = {50};
  } else if (s.kind == ScenarioKind::Ex3) {
    s.K = 3;
    s.n = {10000};
    s.sigma = std::sqrt(10.0);
  } else if (s.kind == ScenarioKind::HierUniform) {
    s.K = 20;
  } else {
    s.K = 20;
  }
  if (!a.params.empty()) {
    const Json pj = a.params.front() == '{' ? [&] {
      try {
        return Json::parse(a.params);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("--params: ") + e.what());
      }
    }()
                                            : read_json_file(a.params);
    apply_scenario_json(s, pj);
  }
  if (a.K) s.K = *a.K;
  if (a.n) s.n = {*a.n};
  if (a.p) s.p = *a.p;
  if (a.sigma) s.sigma = *a.sigma;
  if (a.sigma_beta) s.sigma_beta = *a.sigma_beta;
  s.seed = seed;
  s.validate();
  if (a.replicates < 1) throw Error(ErrorCode::ConfigError, "--replicates: need at least 1");

  std::vector<Method> methods;
  for (const auto& m : split(a.methods, ',')) methods.push_back(parse_method(m));
  if (methods.empty()) throw Error(ErrorCode::ConfigError, "--methods: none given");
  const std::vector<LearnerSpec> specs = parse_learners(
      {a.learner.empty() ? (s.kind == ScenarioKind::Ex1 ? "mean" : "ols") : a.learner});
  const int jobs = a.jobs > 0 ? a.jobs : exp::default_jobs();

  Manifest man(a.out, "simulate", argv);
  man.set("seed", seed);
  Json& c = man.config();
  c["scenario"] = scenario_to_json(s);
  c["replicates"] = a.replicates;
  c["methods"] = Json::array();
  for (Method m : methods) c["methods"].push_back(to_string(m));
  c["learners"] = Json::array();
  for (const auto& l : specs) c["learners"].push_back(to_string(l));
  c["folds"] = a.folds;
  c["task"] = "generalist";
  c["constraint"] = "simplex";
  man.set("jobs", jobs);
  man.write();

  struct Row {
    Method method;
    Vec w;
    double mse0, psi;
  };
  std::vector<std::string> outputs;
  auto rows = exp::run_replicates(a.replicates, jobs, [&](Index r) {
    Scenario sr = s;
    sr.replicate = static_cast<std::uint32_t>(r);
    auto [coll, truth] = generate(sr);
    if (a.export_data)
      write_collection((fs::path(a.out) / ("data_rep" + std::to_string(r) + ".csv")).string(),
                       coll);
    const SpfLibrary lib = train_library(specs, coll, study_specific_lts(coll));
    Mat B;
    Vec av;
    limit_functions(specs, truth, B, av);
    std::vector<Row> out;
    for (Method m : methods) {
      StackConfig cfg;
      cfg.method = m;
      cfg.learners = specs;
      cfg.folds = a.folds;
      cfg.seed = seed;
      const StackedModel model = fit_library(cfg, coll, lib);
      out.push_back({m, model.weights, mse_region(lib, model.weights, truth, kRegionP0),
                     psi(model.weights, B, av, truth)});
    }
    return out;
  });
  if (a.export_data)
    for (Index r = 0; r < a.replicates; ++r)
      outputs.push_back((fs::path(a.out) / ("data_rep" + std::to_string(r) + ".csv")).string());

  const std::string rpath = (fs::path(a.out) / "replicates.csv").string();
  {
    CsvWriter w(rpath, {"replicate", "seed", "method", "weights", "mse0", "psi"});
    for (Index r = 0; r < a.replicates; ++r)
      for (const auto& row : rows[r]) {
        std::string ws;
        for (Index j = 0; j < row.w.size(); ++j) ws += (j ? ";" : "") + format_double(row.w(j));
        w.cell(r).cell(std::to_string(seed)).cell(to_string(row.method)).cell(ws).cell(row.mse0)
            .cell(row.psi).end_row();
      }
  }
  outputs.push_back(rpath);
  const std::string spath = (fs::path(a.out) / "summary.csv").string();
  {
    CsvWriter w(spath, {"method", "replicates", "mean_mse0", "se_mse0", "mean_psi", "se_psi"});
    for (std::size_t m = 0; m < methods.size(); ++m) {
      std::vector<double> v0, v1;
      for (const auto& rr : rows) {
        v0.push_back(rr[m].mse0);
        v1.push_back(rr[m].psi);
      }
      const auto s0 = exp::summarize(v0), s1 = exp::summarize(v1);
      w.cell(to_string(methods[m])).cell(a.replicates).cell(s0.mean);
      if (a.replicates > 1) w.cell(s0.se); else w.empty();
      w.cell(s1.mean);
      if (a.replicates > 1) w.cell(s1.se); else w.empty();
      w.end_row();
    }
  }
  outputs.push_back(spath);
  man.finish("complete", outputs);
  return kExitOk;
}

struct ReproArgs {
  std::string figure, scale = "desk", out;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

int cmd_reproduce(const ReproArgs& a, const std::vector<std::string>& argv) {
  const auto& names = exp::figure_names();
  if (std::find(names.begin(), names.end(), a.figure) == names.end())
    throw Error(ErrorCode::ConfigError, "--figure: unknown figure '" + a.figure + "'");
  exp::ReproduceOptions o;
  o.figure = a.figure;
  o.scale = exp::parse_scale(a.scale);
  o.seed = resolve_seed(a.seed);
  o.jobs = a.jobs > 0 ? a.jobs : exp::default_jobs();
  o.out_dir = a.out;
  Manifest man(a.out, "reproduce", argv);
  man.set("seed", o.seed);
  man.config()["figure"] = o.figure;
  man.config()["scale"] = exp::to_string(o.scale);
  man.set("jobs", o.jobs);
  man.write();
  const exp::ReproduceReport rep = exp::reproduce(o);
  man.set("replicate_factor", rep.replicate_factor);
  man.set("setting", rep.note);
  man.finish("complete", rep.files);
  return kExitOk;
}

int dispatch(const std::vector<std::string>& args);

int cmd_replay(const std::string& manifest, const std::string& out) {
  const Json m = read_json_file(manifest);
  std::vector<std::string> argv;
  try {
    argv = m.at("argv").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("--manifest: ") + e.what());
  }
  if (argv.empty() || argv[0] == "replay")
    throw Error(ErrorCode::ConfigError, "--manifest: no replayable command");
  if (!m.contains("seed"))
    throw Error(ErrorCode::ConfigError, "--manifest: no recorded seed");
  const std::string seed = std::to_string(m["seed"].get<std::uint64_t>());
  bool has_seed = false;
  for (std::size_t i = 0; i < argv.size(); ++i) {
    if (argv[i] == "--out" && i + 1 < argv.size()) argv[i + 1] = out;
    if (argv[i].rfind("--out=", 0) == 0) argv[i] = "--out=" + out;
    if (argv[i] == "--seed" || argv[i].rfind("--seed=", 0) == 0) has_seed = true;
  }
  if (!has_seed) {
    argv.push_back("--seed");
    argv.push_back(seed);
  }
  return dispatch(argv);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Multi-study stacking: fit, simulate and reproduce experiments", "mstack"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit stacking weights on a multi-study data file");
  fit_cmd->add_option("--data", fa.data, "CSV with columns study,y,features...")->required();
  fit_cmd->add_option("--task", fa.task, "generalist | specialist:K (study id or 1-based index)");
  fit_cmd->add_option("--method", fa.method, "dr | cvws | cvcs");
  fit_cmd->add_option("--learner", fa.learners, "mean | ols | ols+fallback | ridge:ALPHA")
      ->delimiter(',');
  fit_cmd->add_option("--constraint", fa.constraint, "simplex | box:L,U | free");
  fit_cmd->add_option("--folds", fa.folds, "CVws folds M");
  fit_cmd->add_option("--repeats", fa.repeats, "CVws repeats R");
  fit_cmd->add_option("--cs-mode", fa.cs_mode, "fixed-nu | self-nu | uniform-elim");
  fit_cmd->add_option("--lambda", fa.lambda, "auto | VALUE (penalty toward generalist weights)");
  fit_cmd->add_option("--lts", fa.lts, "study-specific | pooled | FILE.json");
  fit_cmd->add_option("--seed", fa.seed, "RNG seed (falls back to MSTACK_SEED)");
  fit_cmd->add_option("--out", fa.out, "Output directory")->required();
  fit_cmd->add_flag("--table", fa.table, "Also write per-sample fitted values");

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo runs on a synthetic scenario");
  sim_cmd->add_option("--scenario", sa.scenario, "ex1 | ex2 | ex3 | hier-uniform")->required();
  sim_cmd->add_option("--params", sa.params, "JSON object or JSON file with scenario fields");
  sim_cmd->add_option("--replicates", sa.replicates, "Number of replicates");
  sim_cmd->add_option("--methods", sa.methods, "Comma list of dr, cvws, cvcs");
  sim_cmd->add_option("--learner", sa.learner, "Learner list (default mean for ex1, else ols)");
  sim_cmd->add_option("--folds", sa.folds, "CVws folds");
  sim_cmd->add_option("--K", sa.K, "Number of studies (overrides --params)");
  sim_cmd->add_option("--n", sa.n, "Samples per study (overrides --params)");
  sim_cmd->add_option("--p", sa.p, "Number of covariates (overrides --params)");
  sim_cmd->add_option("--sigma", sa.sigma, "Noise sd (ex1: sd of study means)");
  sim_cmd->add_option("--sigma-beta", sa.sigma_beta, "Coefficient heterogeneity sd");
  sim_cmd->add_option("--seed", sa.seed, "RNG seed (falls back to MSTACK_SEED)");
  sim_cmd->add_option("--jobs", sa.jobs, "Worker threads (default: all cores)");
  sim_cmd->add_option("--out", sa.out, "Output directory")->required();
  sim_cmd->add_flag("--export-data", sa.export_data, "Write each replicate's data file");

  ReproArgs ra;
  auto* rep_cmd = app.add_subcommand("reproduce", "Emit the data behind one figure");
  rep_cmd->add_option("--figure", ra.figure, "2a | 2bc | 2def | 3-left | 3-right | 4 | 5a | 5bc | 5d | E1")
      ->required();
  rep_cmd->add_option("--scale", ra.scale, "desk | full");
  rep_cmd->add_option("--seed", ra.seed, "RNG seed (falls back to MSTACK_SEED)");
  rep_cmd->add_option("--jobs", ra.jobs, "Worker threads (default: all cores)");
  rep_cmd->add_option("--out", ra.out, "Output directory")->required();

  std::string manifest, replay_out;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  replay_cmd->add_option("--out", replay_out, "Output directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*fit_cmd) return cmd_fit(fa, args);
    if (*sim_cmd) return cmd_simulate(sa, args);
    if (*rep_cmd) return cmd_reproduce(ra, args);
    if (*replay_cmd) return cmd_replay(manifest, replay_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) { return dispatch(args); }

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace mstack
