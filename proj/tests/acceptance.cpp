#include "helpers.hpp"
#include "oracles.hpp"
#include "mstack/experiments.hpp"
#include "mstack/pipelines.hpp"
#include "mstack/sim_oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

using namespace mstack;
using namespace mstack::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

void note(const std::string& s) { std::printf("    %s\n", s.c_str()); }

int failures = 0;

void criterion(int id, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = v.pass && in_time;
  failures += pass ? 0 : 1;
  std::printf("criterion %2d: %s  %s; %.1f s (budget %.0f s%s)\n", id, pass ? "PASS" : "FAIL",
              v.detail.c_str(), secs, budget_s, in_time ? "" : ", exceeded");
  std::fflush(stdout);
}

const int kJobs = exp::default_jobs();

StackConfig ex1_config(Method m) {
  StackConfig cfg;
  cfg.method = m;
  cfg.learners = {LearnerSpec::mean_only()};
  cfg.seed = 1;
  return cfg;
}

// 1. Example-1 weights against their closed forms.
Verdict closed_form_weights() {
  RandomStream rs(101, 0, 0, purpose::kMisc);
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) {
    const double y1 = rs.normal(0, 2), y2 = rs.normal(0, 2);
    const auto c = ex1_collection(y1, y2, 10);
    auto gap = [&](const Vec& w, double w1) {
      worst = std::max({worst, std::abs(w(0) - w1), std::abs(w(1) - (1 - w1))});
    };
    gap(fit(ex1_config(Method::DR), c).weights, 0.5);
    auto spec = ex1_config(Method::DR);
    spec.task = Task::specialist_of(0);
    gap(fit(spec, c).weights, 1.0);
    gap(fit(ex1_config(Method::CVcs), c).weights, y2 * y2 / (y1 * y1 + y2 * y2));
    for (double lambda : {0.01, 0.5, 3.0}) {
      auto pen = spec;
      pen.lambda.kind = LambdaChoice::Kind::Fixed;
      pen.lambda.value = lambda;
      gap(fit(pen, c).weights, 1 - lambda / ((y1 - y2) * (y1 - y2) + 2 * lambda));
    }
  }
  return {worst < 1e-7, fmt("max weight error %.2e (tol 1e-7) over 20 draws", worst)};
}

// 2. Quadratic builders against direct summation.
Verdict estimator_equivalence() {
  RandomStream rs(102, 0, 0, purpose::kMisc);
  double worst = 0.0;
  auto rel = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
  };
  for (int inst = 0; inst < 50; ++inst) {
    const Instance in = random_instance(rs, inst % 2 == 1);
    const auto& c = in.coll;
    const SpfLibrary lib = train_library(in.specs, c, in.lts);
    const Vec nu = random_simplex(c.K(), rs);
    const Vec uni = generalist_nu(c.K());
    const auto part = make_ws_partition(c, 3, 2, 7 + inst);
    const Quadratic dr = dr_utility(lib, c, nu);
    const Quadratic ws = ws_utility(in.specs, c, in.lts, nu, part);
    const Quadratic cs = cs_utility(lib, c, nu);
    const bool study_specific = lib.lts.study_specific(c.K());
    const Quadratic cs_uni = cs_utility(lib, c, uni);
    for (int r = 0; r < 50; ++r) {
      const Vec w = random_vec(lib.J(), rs);
      rel(dr(w), dr_direct(lib, c, nu, w));
      rel(ws(w), ws_direct(in.specs, c, in.lts, nu, part, w));
      rel(cs(w), cs_direct(lib, c, nu, w));
      if (study_specific) rel(cs_uni(w), eliminate_direct(lib, c, uni, w));
    }
  }
  return {worst < 1e-10, fmt("max relative error %.2e (tol 1e-10), 50 instances x 50 w", worst)};
}

// 3. Example-1 principal-deviation moments.
Verdict pd_moments() {
  exp::Ex1PdParams p;
  p.replicates = 20000;
  const double sigma = p.sigma;
  const Index n = p.n;
  const auto r = exp::ex1_principal_deviations(p, 103, kJobs);
  const PdTag tags[] = {PdTag::DrGen, PdTag::DrSpec, PdTag::WsSpec, PdTag::CsGen,
                        PdTag::BayesSpec};
  bool ok = true;
  double worst = 0.0;
  bool derived_ok = true;
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t wi = 0; wi < r.weights.size(); ++wi) {
      const Vec& w = r.weights[wi];
      const auto& v = r.pd[t][wi];
      const auto s = exp::summarize(v);
      const double var = exp::sample_variance(v), var_se = exp::variance_se(v);
      const auto cf = pd_closed_forms_ex1(w, sigma, n, tags[t], p.folds);
      double ref_var = cf.variance;
      if (tags[t] == PdTag::BayesSpec) {
        // Printed appendix form for the Bayesian specialist.
        const double s2 = sigma * sigma, nn = static_cast<double>(n);
        ref_var = ((s2 + (1 / nn) / (s2 + 1 / nn)) * w.squaredNorm() - 2 * w(0) * w(1)) / nn;
        const double zd = std::abs(var - cf.variance) / var_se;
        derived_ok &= zd < 3;
        note(fmt("bayes-spec w=(%.2f,%.2f): derived variance %.5g, z=%.2f", w(0), w(1),
                 cf.variance, zd));
      }
      const double zm = s.se > 0 ? std::abs(s.mean - cf.mean) / s.se : 0.0;
      const double zv = var_se > 0 ? std::abs(var - ref_var) / var_se : 0.0;
      ok &= zm < 3 && zv < 3;
      worst = std::max({worst, zm, zv});
      note(fmt("%-10s w=(%.2f,%.2f): mean %.5g vs %.5g (z=%.2f), var %.5g vs %.5g (z=%.2f)",
               to_string(tags[t]).c_str(), w(0), w(1), s.mean, cf.mean, zm, var, ref_var, zv));
    }
  return {ok, fmt("max z %.2f (tol 3 SE); bayes-spec derived variance %s", worst,
                  derived_ok ? "within 3 SE" : "outside 3 SE")};
}

// 4. Example-2 principal deviations along the weight path.
Verdict pd_path() {
  exp::PdPathParams p;
  const auto r = exp::pd_weight_path(p, 104, kJobs);
  bool ok = true;
  double worst_gap = 0.0, worst_closed = 0.0;
  for (std::size_t wi = 0; wi < r.w1.size(); ++wi) {
    const auto dr = exp::summarize(r.pd[0][wi]), ws = exp::summarize(r.pd[1][wi]),
               cs = exp::summarize(r.pd[2][wi]);
    const double gap = std::abs(dr.mean - ws.mean) / dr.se;
    const double closed = std::abs(dr.mean - r.closed_dr[wi]) / dr.se;
    ok &= gap < 5 && cs.mean < dr.mean && closed < 3;
    worst_gap = std::max(worst_gap, gap);
    worst_closed = std::max(worst_closed, closed);
    note(fmt("w1=%.2f: DR %.4g  WS %.4g  CS %.4g  closed DR %.4g (SE %.3g)", r.w1[wi], dr.mean,
             ws.mean, cs.mean, r.closed_dr[wi], dr.se));
  }
  return {ok, fmt("max |DR-WS| %.2f SE (tol 5), max |DR-closed| %.2f SE (tol 3), CS<DR checked",
                  worst_gap, worst_closed)};
}

// 5. Convergence rates.
Verdict rates() {
  const auto r = exp::utility_rates(exp::RateParams{}, 105, kJobs);
  const double a = r.ws_fit.slope, b = r.limit_fit.slope;
  const bool ok = a >= -1.2 && a <= -0.8 && b >= -0.65 && b <= -0.35;
  return {ok, fmt("slope |DR-WS| %.3f in [-1.2,-0.8], slope |DR-limit| %.3f in [-0.65,-0.35]", a,
                  b)};
}

// 6. Gap curves under the uniform hierarchical model.
Verdict gap_curves() {
  exp::BoundParams p;
  p.n_for_K = {100};
  p.K_for_n = {20};
  p.replicates = 200;
  const auto cells = exp::bound_sweep(p, 106, kJobs);
  bool ok = true;
  std::string fits;
  for (int method = 0; method < 2; ++method) {
    for (const char* sweep : {"K", "n"}) {
      std::vector<double> x, gap;
      for (const auto& cell : cells) {
        if (cell.sweep != sweep) continue;
        std::vector<double> g;
        for (const auto& run : cell.runs)
          g.push_back((method == 0 ? run.psi_dr : run.psi_cs) - run.psi_oracle);
        const auto s = exp::summarize(g);
        gap.push_back(s.mean);
        const double k = static_cast<double>(cell.K);
        x.push_back(std::string(sweep) == "K" ? std::sqrt(std::log(k) / k)
                                              : 1 / std::sqrt(static_cast<double>(cell.n)));
        note(fmt("%s K=%ld n=%ld: E gap %.5g (SE %.2g)", method == 0 ? "DR" : "CS",
                 static_cast<long>(cell.K), static_cast<long>(cell.n), s.mean, s.se));
      }
      for (std::size_t i = 0; i < gap.size(); ++i) {
        ok &= gap[i] > 0;
        if (i > 0) ok &= gap[i] < gap[i - 1];
      }
      if (std::string(sweep) == "K") {
        const auto f = exp::fit_line(x, gap);
        ok &= f.r2 >= 0.85;
        fits += fmt("%s R2 %.3f ", method == 0 ? "DR" : "CS", f.r2);
      }
    }
  }
  return {ok, "positive, decreasing in K and n; fit on sqrt(log K / K): " + fits + "(tol 0.85)"};
}

// Gradient of the large-n cross-set utility, summed directly over validation studies.
Vec limit_cs_gradient(const Mat& B, const Vec& w) {
  const Index K = B.cols();
  const double c = K / (K - 1.0);
  Vec g = Vec::Zero(K);
  for (Index k = 0; k < K; ++k) {
    Vec fit_k = Vec::Zero(B.rows());
    for (Index j = 0; j < K; ++j)
      if (j != k) fit_k += c * w(j) * B.col(j);
    const Vec resid = B.col(k) - fit_k;
    for (Index j = 0; j < K; ++j)
      if (j != k) g(j) += 2.0 / K * c * B.col(j).dot(resid);
  }
  return g;
}

// 7. Heterogeneity sign pattern and the limiting weights.
Verdict heterogeneity() {
  exp::HeterogeneityParams p;
  p.K_grid = {2, 9};
  p.sigma_beta_grid = {0.25, 4.0};
  p.replicates = 500;
  const auto cells = exp::heterogeneity_sweep(p, 107, kJobs);
  bool ok = true;
  for (const auto& cell : cells) {
    std::vector<double> d;
    for (const auto& run : cell.runs) d.push_back(run.psi_dr - run.psi_cs);
    const auto s = exp::summarize(d);
    const bool sign = cell.sigma_beta < 1 ? s.mean < 0 : s.mean > 0;
    ok &= sign;
    note(fmt("K=%ld sigma_beta=%.2f: E(psi_DR - psi_CS) %.4g (SE %.2g)",
             static_cast<long>(cell.K), cell.sigma_beta, s.mean, s.se));
  }
  RandomStream rs(107, 0, 0, purpose::kMisc);
  double worst = 0.0;
  for (int r = 0; r < 50; ++r) {
    const Index K = 3 + rs.below(8), pdim = 2 + rs.below(12);
    const Mat B = Mat::NullaryExpr(pdim, K, [&] { return rs.normal(1.0, 1.0); });
    const Vec w = asymptotic_cs_weights(B).cs;
    const double scale = 1.0 + (B.transpose() * B).cwiseAbs().maxCoeff();
    worst = std::max(worst, limit_cs_gradient(B, w).lpNorm<Eigen::Infinity>() / scale);
  }
  ok &= worst < 1e-8;
  return {ok, fmt("sign pattern checked at K in {2,9}; limiting-stationarity residual %.2e "
                  "(tol 1e-8)",
                  worst)};
}

// 8. Penalized specialist.
Verdict penalty() {
  exp::SpecialistParams p;
  p.n1_grid = {15, 20, 25, 30, 35, 40, 45};
  p.replicates = 50;
  const auto rows = exp::specialist_comparison(p, 108, kJobs);
  bool ok = true;
  Index good = 0, ordered = 0;
  for (Index n1 : p.n1_grid) {
    std::vector<double> gen, spec, pen;
    Index beats_gen = 0;
    for (const auto& row : rows) {
      if (row.n1 != n1) continue;
      gen.push_back(row.mse_generalist);
      spec.push_back(row.mse_specialist);
      pen.push_back(row.mse_penalized);
      good += row.mse_penalized <= row.mse_specialist;
      beats_gen += row.mse_penalized <= row.mse_generalist;
    }
    const double mg = exp::median(gen), ms = exp::median(spec), mp = exp::median(pen);
    ordered += mp <= ms && mp <= mg;
    note(fmt("n1=%ld: median MSE1 penalized %.4g, specialist %.4g, generalist %.4g; "
             "penalized <= generalist in %ld/%zu",
             static_cast<long>(n1), mp, ms, mg, static_cast<long>(beats_gen), pen.size()));
  }
  const double frac = static_cast<double>(good) / static_cast<double>(rows.size());
  ok &= ordered == static_cast<Index>(p.n1_grid.size()) && frac >= 0.6;
  return {ok, fmt("penalized median lowest at %ld/%zu n1 values; MSE1(lambda*) <= MSE1(0) in "
                  "%.1f%% (tol 60%%)",
                  static_cast<long>(ordered), p.n1_grid.size(), 100 * frac)};
}

// 9. Iterative averaging of specialists.
Verdict iterative() {
  const auto runs = exp::iterative_runs(exp::IterativeParams{}, 109, kJobs);
  Index improved = 0, settled = 0;
  for (const auto& run : runs) {
    const std::size_t r3 = std::min<std::size_t>(3, run.mse0.size() - 1);
    improved += run.mse0[r3] < run.mse0[0];
    const std::size_t r6 = std::min<std::size_t>(6, run.change.size() - 1);
    settled += r6 >= 1 && run.change[r6] < 1e-3;
  }
  std::vector<double> c6, rel6;
  for (const auto& run : runs) {
    const std::size_t r6 = std::min<std::size_t>(6, run.change.size() - 1);
    c6.push_back(run.change[r6]);
    rel6.push_back(std::abs(run.mse0[r6] - run.mse0[r6 - 1]) / run.mse0[r6 - 1]);
  }
  std::sort(c6.begin(), c6.end());
  std::sort(rel6.begin(), rel6.end());
  note(fmt("round-6 weight change: median %.2e, max %.2e; relative MSE0 change: median %.2e, "
           "max %.2e",
           c6[c6.size() / 2], c6.back(), rel6[rel6.size() / 2], rel6.back()));
  const double n = static_cast<double>(runs.size());
  const bool ok = improved >= 0.8 * n && settled == static_cast<Index>(runs.size());
  return {ok, fmt("round-3 MSE0 below round 0 in %.0f%% (tol 80%%); change < 1e-3 by round 6 "
                  "in %ld/%ld",
                  100 * improved / n, static_cast<long>(settled),
                  static_cast<long>(runs.size()))};
}

// Simplex projection by enumerating supports.
Vec project_by_enumeration(const Vec& v) {
  const Index d = v.size();
  Vec best;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index mask = 1; mask < (Index(1) << d); ++mask) {
    double sum = 0.0;
    Index cnt = 0;
    for (Index i = 0; i < d; ++i)
      if (mask >> i & 1) sum += v(i), ++cnt;
    const double theta = (sum - 1.0) / static_cast<double>(cnt);
    Vec w = Vec::Zero(d);
    bool feasible = true;
    for (Index i = 0; i < d; ++i)
      if (mask >> i & 1) {
        w(i) = v(i) - theta;
        feasible &= w(i) >= 0.0;
      }
    if (!feasible) continue;
    const double dist = (w - v).squaredNorm();
    if (dist < best_d) best_d = dist, best = w;
  }
  return best;
}

// 10. Solver and projection correctness.
Verdict qp() {
  RandomStream rs(110, 0, 0, purpose::kMisc);
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int r = 0; r < 100; ++r) {
    const Index d = 1 + r % 3;
    const Mat A = Mat::NullaryExpr(d, d + 1, [&] { return rs.normal(); }) / std::sqrt(d + 1.0);
    const Quadratic q(A * A.transpose(), random_vec(d, rs), rs.normal());
    const auto rep = maximize(q, FeasibleSet::simplex());
    const auto [wg, vg] = grid_oracle(q, d == 3 ? 2001 : 100001);
    worst_obj = std::max(worst_obj, std::abs(rep.objective - vg));
    // Natural residual of the minimization form, with the enumeration projection.
    const Vec step = rep.w - (q.Sigma * rep.w - q.b);
    worst_kkt = std::max(
        worst_kkt, (rep.w - project_by_enumeration(step)).lpNorm<Eigen::Infinity>());
  }
  double worst_proj = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const Vec v = random_vec(2 + r % 5, rs, 1.5);
    worst_proj = std::max(
        worst_proj, (project_simplex(v) - project_by_enumeration(v)).lpNorm<Eigen::Infinity>());
  }
  const bool ok = worst_obj < 1e-5 && worst_kkt < 1e-9 && worst_proj < 1e-15;
  return {ok, fmt("objective gap %.2e (tol 1e-5), KKT %.2e (tol 1e-9), projection %.2e "
                  "(tol 1e-15)",
                  worst_obj, worst_kkt, worst_proj)};
}

}  // namespace

int main() {
  std::printf("acceptance suite, %d worker thread(s)\n", kJobs);
  criterion(1, 1, closed_form_weights);
  criterion(2, 10, estimator_equivalence);
  criterion(3, 120, pd_moments);
  criterion(4, 300, pd_path);
  criterion(5, 300, rates);
  criterion(6, 900, gap_curves);
  criterion(7, 600, heterogeneity);
  criterion(8, 900, penalty);
  criterion(9, 900, iterative);
  criterion(10, 30, qp);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
