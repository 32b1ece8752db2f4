#pragma once

#include "mstack/data_model.hpp"
#include "mstack/learners.hpp"
#include "mstack/qp.hpp"
#include "mstack/rng.hpp"
#include "mstack/utility.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mstack {

enum class ScenarioKind { Ex1, Ex2, Ex3, HierUniform };

std::string to_string(ScenarioKind k);
ScenarioKind parse_scenario(const std::string& s);

// Ex1: mu_k ~ N(0, sigma^2), y ~ N(mu_k, 1), no covariates.
// Ex2: beta_k ~ N(beta0, sigma_beta^2 I), x ~ N(0, I), eps ~ N(0, sigma^2).
// Ex3: beta_k ~ mix * delta(beta0) + (1 - mix) * N(beta0, sigma_beta^2 I), otherwise as Ex2.
// HierUniform: beta_k, x and eps with uniform components on [0,1], [-1,1], [-1,1].
struct Scenario {
  ScenarioKind kind = ScenarioKind::Ex2;
  Index K = 2;
  std::vector<Index> n{100};  // one entry per study, or a single entry for all
  Index p = 10;
  Vec beta0;                   // empty means 1_p (Ex2, Ex3)
  double sigma_beta = 1.0;
  double sigma = 1.0;          // Ex1: sd of mu_k; Ex2/Ex3: noise sd
  double mix = 0.5;
  // Ex3: redraw study parameters until beta_1 = beta_2 = beta0 != beta_3.
  bool until_pattern = false;
  std::uint64_t seed = 0;
  std::uint32_t replicate = 0;

  Index n_of(Index k) const { return n.size() == 1 ? n[0] : n[k]; }
  void validate() const;
};

// Linear truth y = mu_k + beta_k' x + eps with E x = 0, Cov x = s_x I.
// A future study draws (mu, beta) with means (mu0, beta0) and variances
// (mu_var, beta_var per coordinate).
struct TruthBundle {
  ScenarioKind kind = ScenarioKind::Ex2;
  Vec mu;      // K
  Mat beta;    // p x K
  Vec beta0;   // p
  double mu0 = 0.0;
  double mu_var = 0.0;
  double beta_var = 0.0;
  double noise_var = 1.0;
  double x_moment = 1.0;
  double sigma_beta = 0.0;
  double sigma = 0.0;
  Index attempts = 1;  // Ex3 pattern draws used
};

std::pair<StudyCollection, TruthBundle> generate(const Scenario& s);

// Draws m fresh samples from study k (region >= 0) or from P0 (region < 0,
// each sample with its own study-level parameters).
std::pair<Mat, Vec> draw_fresh(const Scenario& s, const TruthBundle& t, Index region, Index m,
                               RandomStream& rs);

constexpr Index kRegionP0 = -1;

// True utility of the library's SPFs in a region: -(w'Sw - 2b'w + c) is the
// exact negative MSE of the ensemble w.
Quadratic oracle_quadratic(const SpfLibrary& lib, const TruthBundle& t, Index region);

// Mean squared error of the ensemble w in a region (closed form).
double mse_region(const SpfLibrary& lib, const Vec& w, const TruthBundle& t, Index region);
// Same quantity estimated with mc_n fresh draws.
double mse_region_mc(const SpfLibrary& lib, const Vec& w, const Scenario& s,
                     const TruthBundle& t, Index region, Index mc_n, std::uint64_t seed);

// -w'(S_hat - S)w + 2w'(b_hat - b). With drop_constant, a linear term proportional to 1
// is dropped, since it is constant on the simplex.
double principal_deviation(const Quadratic& est, const Quadratic& truth, const Vec& w,
                           bool drop_constant = false);

// psi(w) = ||B w - beta0||^2 + p sigma_beta^2 + sigma^2 (linear-Gaussian family).
double psi(const Vec& w, const Mat& B, const Vec& beta0, double sigma_beta, double sigma);
// General form for a linear truth: limit SPFs with slopes B (p x J) and intercepts a (J).
double psi(const Vec& w, const Mat& B, const Vec& a, const TruthBundle& t);

Vec oracle_generalist_weights_ex1(double y1, double y2);
double oracle_specialist_weight_ex1(double y1, double y2, double mu1);

enum class PdTag { DrGen, DrSpec, WsSpec, CsGen, BayesSpec };
std::string to_string(PdTag t);

struct PdStats {
  double mean = 0.0;
  double variance = 0.0;
  Vec w;
  PdTag tag = PdTag::DrGen;
};

// Example-1 moments of the principal deviation; M is the fold count for WsSpec.
PdStats pd_closed_forms_ex1(const Vec& w, double sigma, Index n, PdTag tag, Index M = 5);

enum class Ex2Tag { DR, CS };
double pd_closed_forms_ex2(const Vec& w, Index K, Index n, Index p, const Vec& beta0,
                           double sigma_beta, double sigma, Ex2Tag tag);

struct BayesUtilities {
  double generalist;
  double specialist[2];
};
BayesUtilities bayes_oracle_utilities_ex1(const Vec& w, double y1, double y2, double sigma,
                                          Index n);
// Posterior predictive mean for study k (0 or 1).
double bayes_center_ex1(double y1, double y2, double sigma, Index n, Index k);

// Minimizer of ||B w - beta0||^2 over W.
Vec oracle_limit_weights(const Mat& B, const Vec& beta0, const FeasibleSet& W,
                         const SolveOptions& opt = {});

// Large-n limits of the generalist DR and CS utilities for study-specific OLS
// SPFs with true slopes B; s_x is the covariate second moment.
Quadratic limit_dr_quadratic(const Mat& B, double s_x = 1.0);
Quadratic limit_cs_quadratic(const Mat& B, double s_x = 1.0);

struct AsymptoticWeights {
  Vec cs;
  Vec dr;
};
AsymptoticWeights asymptotic_cs_weights(const Mat& B);

struct PcaResult {
  Mat coords;        // m x 2
  Vec eigenvalues;   // full spectrum of the centered Gram matrix, descending
  bool degenerate = false;
};
PcaResult pca_project(const Mat& vectors);

}  // namespace mstack
