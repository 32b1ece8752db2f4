#pragma once

#include "mstack/pipelines.hpp"
#include "mstack/sim_oracle.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace mstack::exp {

// ---- Monte Carlo summaries ----

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;  // sd / sqrt(count); nan for a single value
  Index count = 0;
};
Summary summarize(const std::vector<double>& v);

// Unbiased sample variance and a large-sample standard error for it.
double sample_variance(const std::vector<double>& v);
double variance_se(const std::vector<double>& v);
double median(std::vector<double> v);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Runs f(0..n-1) on up to `jobs` threads; results keep replicate order and the
// first exception (by index) is rethrown.
template <typename F>
auto run_replicates(Index n, int jobs, F&& f) -> std::vector<std::invoke_result_t<F&, Index>> {
  using R = std::invoke_result_t<F&, Index>;
  std::vector<R> out(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errs(static_cast<std::size_t>(n));
  std::atomic<Index> next{0};
  auto worker = [&] {
    for (Index i = next++; i < n; i = next++) {
      try {
        out[i] = f(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const int t = static_cast<int>(std::max<Index>(1, std::min<Index>(jobs < 1 ? 1 : jobs, n)));
  if (t == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < t; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

int default_jobs();

// ---- Example 1: principal deviations ----

struct Ex1PdParams {
  double sigma = 1.0;
  Index n = 50;
  Index folds = 5;
  Index replicates = 20000;
  std::vector<Vec> weights;  // empty means (1,0), (1/2,1/2), (0,1)
};

// pd[tag][w][replicate] for the tags of PdTag in declaration order.
struct Ex1PdResult {
  std::vector<Vec> weights;
  std::vector<std::vector<std::vector<double>>> pd;
};
Ex1PdResult ex1_principal_deviations(const Ex1PdParams& p, std::uint64_t seed, int jobs);

// ---- Example 2: utility convergence rates ----

struct RateParams {
  Index K = 10;
  Index p = 5;
  double sigma = 1.0;
  double sigma_beta = 1.0;
  std::vector<Index> n_grid{100, 200, 400, 800, 1600, 3200};
  Index repeats = 40;
  Index folds = 5;
};
struct RateRow {
  Index repeat = 0;
  Index n = 0;
  double dr_ws = 0.0;     // |U_DR - U_WS| at the uniform weights
  double dr_limit = 0.0;  // |U_DR - lim U_DR|
};
struct RateResult {
  std::vector<RateRow> rows;
  std::vector<double> mean_dr_ws, mean_dr_limit;  // per n
  LineFit ws_fit, limit_fit;                      // log10 mean vs log10 n
};
RateResult utility_rates(const RateParams& p, std::uint64_t seed, int jobs);

// ---- Example 2: principal deviations over a weight path ----

struct PdPathParams {
  Index K = 20;
  Index p = 10;
  Index n = 100;
  double sigma = 1.0;
  double sigma_beta = 1.0;
  Index replicates = 50;
  Index folds = 5;
  std::vector<double> w1_grid;  // empty means 0, 0.05, ..., 0.5
};
struct PdPathResult {
  std::vector<double> w1;
  // pd[method][w][replicate], methods DR, CVws, CVcs
  std::vector<std::vector<std::vector<double>>> pd;
  std::vector<double> closed_dr, closed_cs;
};
PdPathResult pd_weight_path(const PdPathParams& p, std::uint64_t seed, int jobs);
Vec path_weights(double w1, Index K);

// ---- Example 3: within-study vs cross-set generalist surfaces ----

struct Ex3Params {
  Index n = 10000;
  Index p = 10;
  double sigma = 3.1622776601683795;  // sqrt(10)
  double sigma_beta = 1.0;
  Index folds = 5;
  Index grid = 51;
  Index pca_points = 2000;
};
struct Ex3Result {
  Scenario scenario;
  TruthBundle truth;
  Vec w_ws, w_cs;
  // lattice points (w1, w2, u_ws, u_cs)
  std::vector<std::array<double, 4>> surface;
  std::vector<std::string> pca_labels;
  PcaResult pca;
  double dist_ws = 0.0, dist_cs = 0.0;  // 2-D distance to the oracle function
};
Ex3Result ex3_surfaces(const Ex3Params& p, std::uint64_t seed);

// ---- Penalized specialist stacking ----

struct PenaltyCurveParams {
  Index K = 5;
  Index n1 = 10;
  Index n_other = 100;
  Index p = 10;
  double sigma = 5.0;
  double sigma_beta = 1.0;
  std::vector<double> grid;  // empty means 49 log-spaced points over [1e-3, 1e3]
};
struct PenaltyCurveResult {
  std::vector<double> lambda, mse_penalized, loo_error;
  double mse_specialist = 0.0, mse_generalist = 0.0, lambda_star = 0.0, mse_at_star = 0.0;
};
PenaltyCurveResult penalty_curve(const PenaltyCurveParams& p, std::uint64_t seed,
                                 std::uint32_t replicate = 0);

struct SpecialistParams {
  Index K = 5;
  std::vector<Index> n1_grid{15, 20, 25, 30, 35, 40, 45};
  Index n_other = 100;
  Index p = 10;
  double sigma = 5.0;
  double sigma_beta = 1.0;
  Index replicates = 50;
};
struct SpecialistRow {
  Index n1 = 0;
  Index replicate = 0;
  double mse_generalist = 0.0, mse_specialist = 0.0, mse_penalized = 0.0, lambda = 0.0;
};
std::vector<SpecialistRow> specialist_comparison(const SpecialistParams& p, std::uint64_t seed,
                                                 int jobs);

// ---- Iterative averaging of specialists ----

struct IterativeParams {
  Index K = 20;
  Index n_small = 15;
  Index n_large = 100;
  Index p = 10;
  double sigma = 5.0;
  double sigma_beta = 1.0;
  Index replicates = 50;
  Index max_rounds = 7;
};
struct IterativeRun {
  std::vector<double> mse0;    // per round, index 0 = plain average of specialists
  std::vector<double> change;  // sup-norm weight change per round (0 for round 0)
  double mse0_true_average = 0.0;
  bool converged = false;
};
std::vector<IterativeRun> iterative_runs(const IterativeParams& p, std::uint64_t seed, int jobs);

// ---- Generalist accuracy: psi gaps ----

struct PsiRun {
  double psi_dr = 0.0, psi_cs = 0.0, psi_oracle = 0.0;
};
// One replicate of a generalist comparison on study-specific OLS SPFs over W.
PsiRun psi_replicate(const Scenario& s, const FeasibleSet& W = FeasibleSet::simplex());

struct HeterogeneityParams {
  std::vector<Index> K_grid{2, 9};
  std::vector<double> sigma_beta_grid{0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0};
  Index n = 200;
  Index p = 10;
  double sigma = 1.0;
  Index replicates = 1000;
  FeasibleSet feasible = FeasibleSet::free();
};
struct HeterogeneityCell {
  Index K = 0;
  double sigma_beta = 0.0;
  std::vector<PsiRun> runs;
};
std::vector<HeterogeneityCell> heterogeneity_sweep(const HeterogeneityParams& p,
                                                   std::uint64_t seed, int jobs);

struct BoundParams {
  std::vector<Index> K_grid{20, 30, 40, 50};
  std::vector<Index> n_for_K{100, 200, 400};
  std::vector<Index> n_grid{20, 40, 60, 80, 100};
  std::vector<Index> K_for_n{5, 15, 20};
  Index p = 10;
  Index replicates = 1000;
};
struct BoundCell {
  std::string sweep;  // "K" or "n"
  Index K = 0;
  Index n = 0;
  std::vector<PsiRun> runs;
};
std::vector<BoundCell> bound_sweep(const BoundParams& p, std::uint64_t seed, int jobs);

// ---- Figure emission ----

enum class Scale { Desk, Full };
Scale parse_scale(const std::string& s);
std::string to_string(Scale s);

struct ReproduceOptions {
  std::string figure;
  Scale scale = Scale::Desk;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir;
};

const std::vector<std::string>& figure_names();
// Writes the tables for one figure; returns the file paths and a JSON-able
// description of the replicate scaling applied.
struct ReproduceReport {
  std::vector<std::string> files;
  double replicate_factor = 1.0;
  std::string note;
};
ReproduceReport reproduce(const ReproduceOptions& o);

}  // namespace mstack::exp
