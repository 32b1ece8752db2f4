#include "mstack/experiments.hpp"

#include "mstack/io.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

namespace mstack::exp {

Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.count = static_cast<Index>(v.size());
  if (v.empty()) {
    s.mean = s.sd = s.se = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) {
    s.sd = s.se = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.sd = std::sqrt(sample_variance(v));
  s.se = s.sd / std::sqrt(static_cast<double>(v.size()));
  return s;
}

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / (n - 1.0);
}

// Var(s^2) ~ (m4 - s^4 (N-3)/(N-1)) / N.
double variance_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = (x - m) * (x - m);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return std::sqrt(std::max(0.0, (m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n));
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  const double hi = v[h];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + h));
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorCode::InvalidArgument, "line fit needs two or more paired points");
  const Index n = static_cast<Index>(x.size());
  Mat A(n, 2);
  Vec b(n);
  for (Index i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = x[i];
    b(i) = y[i];
  }
  const Vec coef = A.colPivHouseholderQr().solve(b);
  LineFit f;
  f.intercept = coef(0);
  f.slope = coef(1);
  const double ss_res = (A * coef - b).squaredNorm();
  const double ss_tot = (b.array() - b.mean()).square().sum();
  f.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

int default_jobs() {
  const unsigned h = std::thread::hardware_concurrency();
  return h ? static_cast<int>(h) : 1;
}

namespace {

std::uint32_t u32(Index i) { return static_cast<std::uint32_t>(i); }

Scenario ex2_scenario(Index K, std::vector<Index> n, Index p, double sigma, double sigma_beta,
                      std::uint64_t seed, Index replicate) {
  Scenario s;
  s.kind = ScenarioKind::Ex2;
  s.K = K;
  s.n = std::move(n);
  s.p = p;
  s.sigma = sigma;
  s.sigma_beta = sigma_beta;
  s.seed = seed;
  s.replicate = u32(replicate);
  return s;
}

const std::vector<LearnerSpec>& ols_specs() {
  static const std::vector<LearnerSpec> v{LearnerSpec::ols(true)};
  return v;
}

StackConfig generalist_config(Method m) {
  StackConfig cfg;
  cfg.method = m;
  cfg.learners = ols_specs();
  return cfg;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  for (int a = 0; a < points; ++a)
    g[a] = std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * a / (points - 1));
  return g;
}

}  // namespace

Ex1PdResult ex1_principal_deviations(const Ex1PdParams& p, std::uint64_t seed, int jobs) {
  Ex1PdResult res;
  res.weights = p.weights;
  if (res.weights.empty()) {
    res.weights = {Vec::Unit(2, 0), Vec::Constant(2, 0.5), Vec::Unit(2, 1)};
  }
  const std::vector<LearnerSpec> specs{LearnerSpec::mean_only()};
  const Index W = static_cast<Index>(res.weights.size());
  constexpr Index kTags = 5;
  auto one = [&](Index r) {
    Scenario s;
    s.kind = ScenarioKind::Ex1;
    s.K = 2;
    s.n = {p.n};
    s.sigma = p.sigma;
    s.seed = seed;
    s.replicate = u32(r);
    auto [coll, truth] = generate(s);
    const TrainingSetList lts = study_specific_lts(coll);
    const SpfLibrary lib = train_library(specs, coll, lts);
    const Vec gen = generalist_nu(2), spec = specialist_nu(2, 0);
    const Quadratic u0 = oracle_quadratic(lib, truth, kRegionP0);
    const Quadratic u1 = oracle_quadratic(lib, truth, 0);
    const Quadratic dr_gen = dr_utility(lib, coll, gen);
    const Quadratic dr_spec = dr_utility(lib, coll, spec);
    const Quadratic ws_spec =
        ws_utility(specs, coll, lts, spec, make_ws_partition(coll, p.folds, 1, seed, u32(r)));
    const Quadratic cs_gen = cs_utility(lib, coll, gen);
    const Vec ybar(Vec{{lib.spfs[0].intercept(), lib.spfs[1].intercept()}});
    const double m1 = bayes_center_ex1(ybar(0), ybar(1), p.sigma, p.n, 0);
    const Quadratic bayes(ybar * ybar.transpose(), ybar * m1, m1 * m1);
    std::vector<double> out(kTags * W);
    for (Index w = 0; w < W; ++w) {
      const Vec& wv = res.weights[w];
      out[0 * W + w] = principal_deviation(dr_gen, u0, wv);
      out[1 * W + w] = principal_deviation(dr_spec, u1, wv);
      out[2 * W + w] = principal_deviation(ws_spec, u1, wv);
      out[3 * W + w] = principal_deviation(cs_gen, u0, wv, true);
      out[4 * W + w] = principal_deviation(bayes, u1, wv);
    }
    return out;
  };
  const auto rows = run_replicates(p.replicates, jobs, one);
  res.pd.assign(kTags, std::vector<std::vector<double>>(W));
  for (const auto& row : rows)
    for (Index t = 0; t < kTags; ++t)
      for (Index w = 0; w < W; ++w) res.pd[t][w].push_back(row[t * W + w]);
  return res;
}

RateResult utility_rates(const RateParams& p, std::uint64_t seed, int jobs) {
  const Index G = static_cast<Index>(p.n_grid.size());
  const Vec w = generalist_nu(p.K);
  auto one = [&](Index r) {
    std::vector<RateRow> rows;
    for (Index g = 0; g < G; ++g) {
      const Scenario s = ex2_scenario(p.K, {p.n_grid[g]}, p.p, p.sigma, p.sigma_beta, seed, r);
      auto [coll, truth] = generate(s);
      const TrainingSetList lts = study_specific_lts(coll);
      const SpfLibrary lib = train_library(ols_specs(), coll, lts);
      const double u_dr = dr_utility(lib, coll, w)(w);
      const double u_ws =
          ws_utility(ols_specs(), coll, lts, w, make_ws_partition(coll, p.folds, 1, seed, u32(r)))(w);
      const double u_lim = -(mse(limit_dr_quadratic(truth.beta), w) + truth.noise_var);
      rows.push_back({r, p.n_grid[g], std::abs(u_dr - u_ws), std::abs(u_dr - u_lim)});
    }
    return rows;
  };
  RateResult res;
  for (auto& rows : run_replicates(p.repeats, jobs, one))
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  res.mean_dr_ws.assign(G, 0.0);
  res.mean_dr_limit.assign(G, 0.0);
  for (const auto& row : res.rows) {
    const auto g = std::find(p.n_grid.begin(), p.n_grid.end(), row.n) - p.n_grid.begin();
    res.mean_dr_ws[g] += row.dr_ws / static_cast<double>(p.repeats);
    res.mean_dr_limit[g] += row.dr_limit / static_cast<double>(p.repeats);
  }
  std::vector<double> lx, ly1, ly2;
  for (Index g = 0; g < G; ++g) {
    lx.push_back(std::log10(static_cast<double>(p.n_grid[g])));
    ly1.push_back(std::log10(res.mean_dr_ws[g]));
    ly2.push_back(std::log10(res.mean_dr_limit[g]));
  }
  res.ws_fit = fit_line(lx, ly1);
  res.limit_fit = fit_line(lx, ly2);
  return res;
}

Vec path_weights(double w1, Index K) {
  Vec w = Vec::Constant(K, (1.0 - w1) / static_cast<double>(K - 1));
  w(0) = w1;
  return w;
}

PdPathResult pd_weight_path(const PdPathParams& p, std::uint64_t seed, int jobs) {
  PdPathResult res;
  res.w1 = p.w1_grid;
  if (res.w1.empty())
    for (int i = 0; i <= 10; ++i) res.w1.push_back(0.05 * i);
  const Index W = static_cast<Index>(res.w1.size());
  const Vec nu = generalist_nu(p.K);
  auto one = [&](Index r) {
    const Scenario s = ex2_scenario(p.K, {p.n}, p.p, p.sigma, p.sigma_beta, seed, r);
    auto [coll, truth] = generate(s);
    const TrainingSetList lts = study_specific_lts(coll);
    const SpfLibrary lib = train_library(ols_specs(), coll, lts);
    const Quadratic u0 = oracle_quadratic(lib, truth, kRegionP0);
    const Quadratic q[3] = {
        dr_utility(lib, coll, nu),
        ws_utility(ols_specs(), coll, lts, nu, make_ws_partition(coll, p.folds, 1, seed, u32(r))),
        cs_utility(lib, coll, nu)};
    std::vector<double> out(3 * W);
    for (Index m = 0; m < 3; ++m)
      for (Index w = 0; w < W; ++w)
        out[m * W + w] = principal_deviation(q[m], u0, path_weights(res.w1[w], p.K));
    return out;
  };
  const auto rows = run_replicates(p.replicates, jobs, one);
  res.pd.assign(3, std::vector<std::vector<double>>(W));
  for (const auto& row : rows)
    for (Index m = 0; m < 3; ++m)
      for (Index w = 0; w < W; ++w) res.pd[m][w].push_back(row[m * W + w]);
  const Vec beta0 = Vec::Ones(p.p);
  for (Index w = 0; w < W; ++w) {
    const Vec wv = path_weights(res.w1[w], p.K);
    res.closed_dr.push_back(
        pd_closed_forms_ex2(wv, p.K, p.n, p.p, beta0, p.sigma_beta, p.sigma, Ex2Tag::DR));
    res.closed_cs.push_back(
        pd_closed_forms_ex2(wv, p.K, p.n, p.p, beta0, p.sigma_beta, p.sigma, Ex2Tag::CS));
  }
  return res;
}

Ex3Result ex3_surfaces(const Ex3Params& p, std::uint64_t seed) {
  Ex3Result res;
  Scenario& s = res.scenario;
  s.kind = ScenarioKind::Ex3;
  s.K = 3;
  s.n = {p.n};
  s.p = p.p;
  s.sigma = p.sigma;
  s.sigma_beta = p.sigma_beta;
  s.until_pattern = true;
  s.seed = seed;
  auto [coll, truth] = generate(s);
  res.truth = truth;
  StackConfig ws = generalist_config(Method::CVws);
  ws.folds = p.folds;
  ws.seed = seed;
  StackConfig cs = generalist_config(Method::CVcs);
  const SpfLibrary lib = train_library(ols_specs(), coll, study_specific_lts(coll));
  const StackedModel m_ws = fit_library(ws, coll, lib);
  const StackedModel m_cs = fit_library(cs, coll, lib);
  res.w_ws = m_ws.weights;
  res.w_cs = m_cs.weights;
  const Quadratic q_ws = build_quadratic(ws, coll, lib);
  const Quadratic q_cs = build_quadratic(cs, coll, lib);
  const double h = 1.0 / static_cast<double>(p.grid - 1);
  for (Index i = 0; i < p.grid; ++i) {
    for (Index j = 0; i + j < p.grid; ++j) {
      Vec w(3);
      w << i * h, j * h, std::max(0.0, 1.0 - (i + j) * h);
      res.surface.push_back({w(0), w(1), q_ws(w), q_cs(w)});
    }
  }
  RandomStream rs(seed, 0, 0xffffffffu, purpose::kFresh);
  const Mat X = draw_fresh(s, truth, kRegionP0, p.pca_points, rs).first;
  Mat V(X.rows(), 6);
  V.leftCols(3) = prediction_matrix(lib, X);
  V.col(3) = predict_stacked(lib, res.w_ws, X);
  V.col(4) = predict_stacked(lib, res.w_cs, X);
  V.col(5) = X * truth.beta0;
  res.pca_labels = {"Y1", "Y2", "Y3", "WS", "CS", "oracle"};
  res.pca = pca_project(V);
  res.dist_ws = (res.pca.coords.row(3) - res.pca.coords.row(5)).norm();
  res.dist_cs = (res.pca.coords.row(4) - res.pca.coords.row(5)).norm();
  return res;
}

PenaltyCurveResult penalty_curve(const PenaltyCurveParams& p, std::uint64_t seed,
                                 std::uint32_t replicate) {
  std::vector<Index> n(p.K, p.n_other);
  n[0] = p.n1;
  const Scenario s = ex2_scenario(p.K, n, p.p, p.sigma, p.sigma_beta, seed, replicate);
  auto [coll, truth] = generate(s);
  StackConfig cfg = generalist_config(Method::DR);
  const SpfLibrary lib = train_library(cfg.learners, coll, study_specific_lts(coll));
  PenaltyCurveResult res;
  const Vec anchor = generalist_anchor(cfg, coll, lib);
  res.mse_generalist = mse_region(lib, anchor, truth, 0);
  cfg.task = Task::specialist_of(0);
  res.mse_specialist = mse_region(lib, fit_library(cfg, coll, lib).weights, truth, 0);
  res.lambda = p.grid.empty() ? log_grid(1e-3, 1e3, 49) : p.grid;
  cfg.anchor = anchor;
  cfg.lambda.kind = LambdaChoice::Kind::Fixed;
  for (double l : res.lambda) {
    cfg.lambda.value = l;
    res.mse_penalized.push_back(mse_region(lib, fit_library(cfg, coll, lib).weights, truth, 0));
  }
  StackConfig loo = cfg;
  loo.anchor.reset();
  loo.fast_loo = true;
  const LambdaSelection sel = select_lambda_loo(loo, coll, 0, res.lambda);
  res.loo_error = sel.cv_error;
  res.lambda_star = sel.lambda;
  cfg.lambda.value = sel.lambda;
  res.mse_at_star = mse_region(lib, fit_library(cfg, coll, lib).weights, truth, 0);
  return res;
}

std::vector<SpecialistRow> specialist_comparison(const SpecialistParams& p, std::uint64_t seed,
                                                 int jobs) {
  const Index G = static_cast<Index>(p.n1_grid.size());
  auto one = [&](Index idx) {
    const Index g = idx / p.replicates, r = idx % p.replicates;
    std::vector<Index> n(p.K, p.n_other);
    n[0] = p.n1_grid[g];
    const Scenario s = ex2_scenario(p.K, n, p.p, p.sigma, p.sigma_beta, seed, r);
    auto [coll, truth] = generate(s);
    StackConfig cfg = generalist_config(Method::DR);
    cfg.fast_loo = true;
    const SpfLibrary lib = train_library(cfg.learners, coll, study_specific_lts(coll));
    SpecialistRow row;
    row.n1 = n[0];
    row.replicate = r;
    row.mse_generalist = mse_region(lib, generalist_anchor(cfg, coll, lib), truth, 0);
    cfg.task = Task::specialist_of(0);
    row.mse_specialist = mse_region(lib, fit_library(cfg, coll, lib).weights, truth, 0);
    cfg.lambda.kind = LambdaChoice::Kind::Auto;
    const StackedModel m = fit_library(cfg, coll, lib);
    row.mse_penalized = mse_region(lib, m.weights, truth, 0);
    row.lambda = *m.lambda;
    return row;
  };
  return run_replicates(G * p.replicates, jobs, one);
}

std::vector<IterativeRun> iterative_runs(const IterativeParams& p, std::uint64_t seed, int jobs) {
  auto one = [&](Index r) {
    std::vector<Index> n(p.K, p.n_large);
    for (Index k = 0; k < p.K / 2; ++k) n[k] = p.n_small;
    const Scenario s = ex2_scenario(p.K, n, p.p, p.sigma, p.sigma_beta, seed, r);
    auto [coll, truth] = generate(s);
    IterativeOptions opt;
    opt.max_rounds = p.max_rounds;
    opt.fast_loo = true;
    const IterativeResult it = iterative_generalist_average(coll, ols_specs(), opt);
    IterativeRun run;
    for (std::size_t t = 0; t < it.trajectory.size(); ++t) {
      run.mse0.push_back(mse_region(it.library, it.trajectory[t], truth, kRegionP0));
      run.change.push_back(t ? (it.trajectory[t] - it.trajectory[t - 1]).cwiseAbs().maxCoeff()
                             : 0.0);
    }
    run.converged = it.converged;
    run.mse0_true_average = psi(generalist_nu(p.K), truth.beta, Vec::Zero(p.K), truth);
    return run;
  };
  return run_replicates(p.replicates, jobs, one);
}

PsiRun psi_replicate(const Scenario& s, const FeasibleSet& W) {
  auto [coll, truth] = generate(s);
  const SpfLibrary lib = train_library(ols_specs(), coll, study_specific_lts(coll));
  const Vec a = Vec::Zero(s.K);
  auto weights = [&](Method m) {
    StackConfig cfg = generalist_config(m);
    cfg.feasible = W;
    return fit_library(cfg, coll, lib).weights;
  };
  PsiRun r;
  r.psi_dr = psi(weights(Method::DR), truth.beta, a, truth);
  r.psi_cs = psi(weights(Method::CVcs), truth.beta, a, truth);
  const Vec w0 = oracle_limit_weights(truth.beta, truth.beta0, W);
  r.psi_oracle = psi(w0, truth.beta, a, truth);
  return r;
}

std::vector<HeterogeneityCell> heterogeneity_sweep(const HeterogeneityParams& p,
                                                   std::uint64_t seed, int jobs) {
  std::vector<HeterogeneityCell> cells;
  for (Index K : p.K_grid)
    for (double sb : p.sigma_beta_grid) cells.push_back({K, sb, {}});
  const Index C = static_cast<Index>(cells.size());
  auto runs = run_replicates(C * p.replicates, jobs, [&](Index idx) {
    const HeterogeneityCell& c = cells[idx / p.replicates];
    return psi_replicate(
        ex2_scenario(c.K, {p.n}, p.p, p.sigma, c.sigma_beta, seed, idx % p.replicates),
        p.feasible);
  });
  for (Index i = 0; i < C * p.replicates; ++i) cells[i / p.replicates].runs.push_back(runs[i]);
  return cells;
}

std::vector<BoundCell> bound_sweep(const BoundParams& p, std::uint64_t seed, int jobs) {
  std::vector<BoundCell> cells;
  for (Index n : p.n_for_K)
    for (Index K : p.K_grid) cells.push_back({"K", K, n, {}});
  for (Index K : p.K_for_n)
    for (Index n : p.n_grid) cells.push_back({"n", K, n, {}});
  const Index C = static_cast<Index>(cells.size());
  auto runs = run_replicates(C * p.replicates, jobs, [&](Index idx) {
    const BoundCell& c = cells[idx / p.replicates];
    Scenario s;
    s.kind = ScenarioKind::HierUniform;
    s.K = c.K;
    s.n = {c.n};
    s.p = p.p;
    s.seed = seed;
    s.replicate = u32(idx % p.replicates);
    return psi_replicate(s);
  });
  for (Index i = 0; i < C * p.replicates; ++i) cells[i / p.replicates].runs.push_back(runs[i]);
  return cells;
}

// ---- Figure emission ----

Scale parse_scale(const std::string& s) {
  if (s == "desk") return Scale::Desk;
  if (s == "full") return Scale::Full;
  throw Error(ErrorCode::ConfigError, "--scale: expected desk or full, got '" + s + "'");
}

std::string to_string(Scale s) { return s == Scale::Desk ? "desk" : "full"; }

const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> v{"2a", "2bc", "2def", "3-left", "3-right",
                                          "4",  "5a",  "5bc",  "5d",     "E1"};
  return v;
}

namespace {

struct Emitter {
  const ReproduceOptions& o;
  ReproduceReport& rep;
  CsvWriter open(const std::string& name, std::vector<std::string> header) {
    const std::string path = (std::filesystem::path(o.out_dir) / name).string();
    rep.files.push_back(path);
    return CsvWriter(path, std::move(header));
  }
};

Index scaled(Index full, double factor) {
  return std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(full) * factor)));
}

std::vector<double> gaps(const std::vector<PsiRun>& runs, bool cs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back((cs ? r.psi_cs : r.psi_dr) - r.psi_oracle);
  return v;
}

void emit_bound_fits(Emitter& em, const std::vector<BoundCell>& cells, const std::string& name,
                     bool with_dr) {
  CsvWriter cw = em.open(name + "_cells.csv", {"sweep", "K", "n", "method", "mean_gap", "se_gap",
                                               "replicates"});
  CsvWriter fw = em.open(name + "_fits.csv", {"sweep", "fixed", "method", "form", "c0", "c1", "r2"});
  std::vector<bool> methods;
  if (with_dr) methods.push_back(false);
  methods.push_back(true);
  for (bool cs : methods) {
    const std::string mname = cs ? "cvcs" : "dr";
    for (const auto& c : cells) {
      const Summary s = summarize(gaps(c.runs, cs));
      cw.cell(c.sweep).cell(c.K).cell(c.n).cell(mname).cell(s.mean);
      if (s.count > 1)
        cw.cell(s.se);
      else
        cw.empty();
      cw.cell(s.count).end_row();
    }
    for (const std::string sweep : {"K", "n"}) {
      std::vector<Index> fixed;
      for (const auto& c : cells)
        if (c.sweep == sweep) {
          const Index f = sweep == "K" ? c.n : c.K;
          if (std::find(fixed.begin(), fixed.end(), f) == fixed.end()) fixed.push_back(f);
        }
      for (Index f : fixed) {
        std::vector<double> x1, x2, y;
        for (const auto& c : cells) {
          if (c.sweep != sweep || (sweep == "K" ? c.n : c.K) != f) continue;
          const double v = sweep == "K" ? static_cast<double>(c.K) : static_cast<double>(c.n);
          y.push_back(summarize(gaps(c.runs, cs)).mean);
          x1.push_back(sweep == "K" ? std::sqrt(std::log(v) / v) : 1.0 / std::sqrt(v));
          x2.push_back(std::log(v) / v);
        }
        if (y.size() < 2) continue;
        const LineFit a = fit_line(x1, y);
        fw.cell(sweep).cell(f).cell(mname).cell(sweep == "K" ? "sqrt(log(K)/K)" : "1/sqrt(n)")
            .cell(a.intercept).cell(a.slope).cell(a.r2).end_row();
        if (sweep == "K") {
          const LineFit b = fit_line(x2, y);
          fw.cell(sweep).cell(f).cell(mname).cell("log(K)/K").cell(b.intercept).cell(b.slope)
              .cell(b.r2).end_row();
        }
      }
    }
  }
}

}  // namespace

ReproduceReport reproduce(const ReproduceOptions& o) {
  ReproduceReport rep;
  Emitter em{o, rep};
  const bool full = o.scale == Scale::Full;
  const std::string& f = o.figure;
  std::filesystem::create_directories(o.out_dir);

  if (f == "2a") {
    RateParams p;
    const RateResult r = utility_rates(p, o.seed, o.jobs);
    CsvWriter pts = em.open("fig2a_points.csv", {"repeat", "n", "abs_dr_minus_ws",
                                                 "abs_dr_minus_limit"});
    for (const auto& row : r.rows)
      pts.cell(row.repeat).cell(row.n).cell(row.dr_ws).cell(row.dr_limit).end_row();
    CsvWriter sum = em.open("fig2a_summary.csv", {"n", "mean_abs_dr_minus_ws",
                                                  "mean_abs_dr_minus_limit"});
    for (std::size_t g = 0; g < p.n_grid.size(); ++g)
      sum.cell(p.n_grid[g]).cell(r.mean_dr_ws[g]).cell(r.mean_dr_limit[g]).end_row();
    CsvWriter sl = em.open("fig2a_slopes.csv", {"quantity", "slope", "intercept", "r2"});
    sl.cell("abs_dr_minus_ws").cell(r.ws_fit.slope).cell(r.ws_fit.intercept).cell(r.ws_fit.r2)
        .end_row();
    sl.cell("abs_dr_minus_limit").cell(r.limit_fit.slope).cell(r.limit_fit.intercept)
        .cell(r.limit_fit.r2).end_row();
    rep.note = "K=10, p=5, sigma=sigma_beta=1, 5-fold CVws, 40 repeats, log10 fits of the mean";
  } else if (f == "2bc") {
    PdPathParams p;
    const PdPathResult r = pd_weight_path(p, o.seed, o.jobs);
    const char* names[3] = {"dr", "cvws", "cvcs"};
    CsvWriter pts = em.open("fig2bc_points.csv", {"replicate", "w1", "method", "pd"});
    for (int m = 0; m < 3; ++m)
      for (std::size_t w = 0; w < r.w1.size(); ++w)
        for (std::size_t i = 0; i < r.pd[m][w].size(); ++i)
          pts.cell(static_cast<long long>(i)).cell(r.w1[w]).cell(names[m]).cell(r.pd[m][w][i])
              .end_row();
    CsvWriter sum = em.open("fig2bc_summary.csv", {"w1", "method", "mean_pd", "sd_pd", "se_pd",
                                                   "expected_pd_closed_form"});
    for (int m = 0; m < 3; ++m)
      for (std::size_t w = 0; w < r.w1.size(); ++w) {
        const Summary s = summarize(r.pd[m][w]);
        sum.cell(r.w1[w]).cell(names[m]).cell(s.mean).cell(s.sd).cell(s.se);
        if (m == 0)
          sum.cell(r.closed_dr[w]);
        else if (m == 2)
          sum.cell(r.closed_cs[w]);
        else
          sum.empty();
        sum.end_row();
      }
    rep.note = "K=20, p=10, n=100, sigma=sigma_beta=1, 50 replicates";
  } else if (f == "2def") {
    const Ex3Result r = ex3_surfaces(Ex3Params{}, o.seed);
    CsvWriter sf = em.open("fig2def_surface.csv", {"w1", "w2", "w3", "u_cvws", "u_cvcs"});
    for (const auto& pt : r.surface)
      sf.cell(pt[0]).cell(pt[1]).cell(std::max(0.0, 1.0 - pt[0] - pt[1])).cell(pt[2]).cell(pt[3])
          .end_row();
    CsvWriter mx = em.open("fig2def_maximizers.csv", {"method", "w1", "w2", "w3"});
    mx.cell("cvws").cell(r.w_ws(0)).cell(r.w_ws(1)).cell(r.w_ws(2)).end_row();
    mx.cell("cvcs").cell(r.w_cs(0)).cell(r.w_cs(1)).cell(r.w_cs(2)).end_row();
    CsvWriter pc = em.open("fig2def_pca.csv", {"function", "pc1", "pc2"});
    for (std::size_t i = 0; i < r.pca_labels.size(); ++i)
      pc.cell(r.pca_labels[i]).cell(r.pca.coords(i, 0)).cell(r.pca.coords(i, 1)).end_row();
    CsvWriter tr = em.open("fig2def_truth.csv", {"study", "beta_equals_beta0", "dist_to_beta0",
                                                 "pattern_attempts"});
    for (Index k = 0; k < 3; ++k)
      tr.cell(k + 1).cell(static_cast<long long>(r.truth.beta.col(k) == r.truth.beta0))
          .cell((r.truth.beta.col(k) - r.truth.beta0).norm()).cell(r.truth.attempts).end_row();
    rep.note = "K=3, n=10000, p=10, sigma^2=10, sigma_beta=1, beta0=1; seeded until the pattern";
  } else if (f == "3-left") {
    const PenaltyCurveResult r = penalty_curve(PenaltyCurveParams{}, o.seed);
    CsvWriter cw = em.open("fig3left_curve.csv", {"lambda", "mse1_penalized", "loo_error",
                                                  "mse1_specialist", "mse1_generalist",
                                                  "is_loo_choice"});
    for (std::size_t i = 0; i < r.lambda.size(); ++i)
      cw.cell(r.lambda[i]).cell(r.mse_penalized[i]).cell(r.loo_error[i]).cell(r.mse_specialist)
          .cell(r.mse_generalist).cell(static_cast<long long>(r.lambda[i] == r.lambda_star))
          .end_row();
    rep.note = "K=5, n1=10, n_k=100, p=10, sigma_beta=1, sigma=5; single replicate";
  } else if (f == "3-right") {
    IterativeParams p;
    rep.replicate_factor = full ? 1.0 : 0.2;
    p.replicates = scaled(p.replicates, rep.replicate_factor);
    const auto runs = iterative_runs(p, o.seed, o.jobs);
    CsvWriter tw = em.open("fig3right_trajectory.csv", {"replicate", "round", "mse0",
                                                        "weight_change_sup"});
    for (std::size_t r = 0; r < runs.size(); ++r)
      for (std::size_t t = 0; t < runs[r].mse0.size(); ++t)
        tw.cell(static_cast<long long>(r)).cell(static_cast<long long>(t)).cell(runs[r].mse0[t])
            .cell(runs[r].change[t]).end_row();
    CsvWriter sw = em.open("fig3right_summary.csv", {"round", "mean_mse0", "se_mse0",
                                                     "mean_mse0_true_average"});
    std::vector<double> truth_avg;
    for (const auto& r : runs) truth_avg.push_back(r.mse0_true_average);
    const double ta = summarize(truth_avg).mean;
    for (Index t = 0; t <= p.max_rounds; ++t) {
      std::vector<double> v;
      for (const auto& r : runs) v.push_back(r.mse0[std::min<std::size_t>(t, r.mse0.size() - 1)]);
      const Summary s = summarize(v);
      sw.cell(t).cell(s.mean);
      if (s.count > 1)
        sw.cell(s.se);
      else
        sw.empty();
      sw.cell(ta).end_row();
    }
    rep.note = "K=20, n=15 (10 studies) and 100 (10 studies), p=10, sigma_beta=1, sigma=5";
  } else if (f == "4") {
    HeterogeneityParams p;
    rep.replicate_factor = full ? 1.0 : 0.2;
    p.replicates = scaled(p.replicates, rep.replicate_factor);
    const auto cells = heterogeneity_sweep(p, o.seed, o.jobs);
    CsvWriter rw = em.open("fig4_replicates.csv", {"K", "sigma_beta", "replicate", "psi_dr",
                                                   "psi_cvcs", "psi_oracle"});
    CsvWriter sw = em.open("fig4_summary.csv", {"K", "sigma_beta", "mean_psi_dr_minus_cvcs",
                                                "se_psi_dr_minus_cvcs",
                                                "mean_psi_dr_minus_oracle",
                                                "se_psi_dr_minus_oracle"});
    for (const auto& c : cells) {
      std::vector<double> d1, d2;
      for (std::size_t i = 0; i < c.runs.size(); ++i) {
        const auto& r = c.runs[i];
        rw.cell(c.K).cell(c.sigma_beta).cell(static_cast<long long>(i)).cell(r.psi_dr)
            .cell(r.psi_cs).cell(r.psi_oracle).end_row();
        d1.push_back(r.psi_dr - r.psi_cs);
        d2.push_back(r.psi_dr - r.psi_oracle);
      }
      const Summary a = summarize(d1), b = summarize(d2);
      sw.cell(c.K).cell(c.sigma_beta).cell(a.mean);
      if (a.count > 1) sw.cell(a.se); else sw.empty();
      sw.cell(b.mean);
      if (b.count > 1) sw.cell(b.se); else sw.empty();
      sw.end_row();
    }
    rep.note = "p=10, beta0=1, n=200, sigma=1, W=free";
  } else if (f == "5a") {
    SpecialistParams p;
    const auto rows = specialist_comparison(p, o.seed, o.jobs);
    CsvWriter rw = em.open("fig5a_replicates.csv", {"n1", "replicate", "mse1_generalist",
                                                    "mse1_specialist", "mse1_penalized",
                                                    "lambda_loo"});
    for (const auto& r : rows)
      rw.cell(r.n1).cell(r.replicate).cell(r.mse_generalist).cell(r.mse_specialist)
          .cell(r.mse_penalized).cell(r.lambda).end_row();
    CsvWriter sw = em.open("fig5a_summary.csv", {"n1", "median_mse1_generalist",
                                                 "median_mse1_specialist",
                                                 "median_mse1_penalized"});
    for (Index n1 : p.n1_grid) {
      std::vector<double> g, s, pe;
      for (const auto& r : rows)
        if (r.n1 == n1) {
          g.push_back(r.mse_generalist);
          s.push_back(r.mse_specialist);
          pe.push_back(r.mse_penalized);
        }
      sw.cell(n1).cell(median(g)).cell(median(s)).cell(median(pe)).end_row();
    }
    rep.note = "K=5, n_k=100 for k>1, p=10, sigma_beta=1, sigma=5, 50 replicates";
  } else if (f == "5bc" || f == "E1") {
    BoundParams p;
    rep.replicate_factor = full ? 1.0 : 0.2;
    p.replicates = scaled(p.replicates, rep.replicate_factor);
    const auto cells = bound_sweep(p, o.seed, o.jobs);
    emit_bound_fits(em, cells, f == "E1" ? "figE1" : "fig5bc", f == "5bc");
    rep.note = "uniform hierarchical model, p=10, W=simplex";
  } else if (f == "5d") {
    HeterogeneityParams p;
    p.K_grid = {3, 5, 10, 20, 30, 40, 50};
    p.sigma_beta_grid = {0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};
    p.n = 100;
    rep.replicate_factor = full ? 1.0 : 0.25;
    p.replicates = scaled(200, rep.replicate_factor);
    const auto cells = heterogeneity_sweep(p, o.seed, o.jobs);
    CsvWriter gw = em.open("fig5d_grid.csv", {"K", "sigma_beta", "mean_psi_dr_minus_cvcs",
                                              "se_psi_dr_minus_cvcs", "replicates"});
    for (const auto& c : cells) {
      std::vector<double> d;
      for (const auto& r : c.runs) d.push_back(r.psi_dr - r.psi_cs);
      const Summary s = summarize(d);
      gw.cell(c.K).cell(c.sigma_beta).cell(s.mean);
      if (s.count > 1) gw.cell(s.se); else gw.empty();
      gw.cell(s.count).end_row();
    }
    rep.note = "p=10, beta0=1, n=100, sigma=1, W=free";
  } else {
    throw Error(ErrorCode::ConfigError, "--figure: unknown figure '" + f + "'");
  }
  return rep;
}

}  // namespace mstack::exp
