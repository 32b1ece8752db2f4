#pragma once

#include "mstack/learners.hpp"
#include "mstack/qp.hpp"
#include "mstack/utility.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mstack {

enum class Method { DR, CVws, CVcs };
enum class CsMode { FixedNu, SelfNu, UniformElim };

std::string to_string(Method m);
std::string to_string(CsMode m);
Method parse_method(const std::string& s);
CsMode parse_cs_mode(const std::string& s);

struct Task {
  bool specialist = false;
  Index k = 0;  // target study when specialist

  static Task generalist() { return {}; }
  static Task specialist_of(Index k) { return {true, k}; }
};

struct LtsDescriptor {
  enum class Kind { StudySpecific, Pooled, Explicit };
  Kind kind = Kind::StudySpecific;
  TrainingSetList sets;  // Explicit only
};

TrainingSetList resolve_lts(const LtsDescriptor& d, const StudyCollection& c);

struct LambdaChoice {
  enum class Kind { None, Fixed, Auto };
  Kind kind = Kind::None;
  double value = 0.0;
  std::vector<double> grid;  // Auto; empty means default_lambda_grid()
  // Auto: refine the grid argmin by golden-section search on log lambda between its neighbours.
  bool refine = false;
};

// 25 log-spaced points over [1e-3, 1e3].
std::vector<double> default_lambda_grid();

struct StackConfig {
  Method method = Method::DR;
  Index folds = 5;
  Index repeats = 1;
  CsMode cs_mode = CsMode::FixedNu;
  Task task;
  std::vector<LearnerSpec> learners{LearnerSpec::mean_only()};
  LtsDescriptor lts;
  FeasibleSet feasible;
  LambdaChoice lambda;
  // Penalty anchor override; default is the DR generalist weights on the same library.
  std::optional<Vec> anchor;
  // Custom target weights; default follows the task.
  std::optional<Vec> nu;
  std::uint64_t seed = 0;
  SolveOptions solver;
  // LOO refits by rank-one downdating instead of retraining.
  bool fast_loo = false;
  // Test override: every CVws fold is a copy of the full study.
  bool ws_full_copy = false;
};

void validate_config(const StackConfig& cfg, const StudyCollection& c);
Vec target_nu(const StackConfig& cfg, Index K);

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_error;  // mean squared LOO error per grid point
};

struct StackedModel {
  Vec weights;
  SpfLibrary library;
  StackConfig config;
  SolveReport<double> report;
  std::optional<double> lambda;
  std::optional<LambdaSelection> selection;
  Vec anchor;  // empty when no penalty
};

// Utility estimate named by cfg.method on the given library (no penalty).
// Not available for the self-nu mode, which is not quadratic.
Quadratic build_quadratic(const StackConfig& cfg, const StudyCollection& c,
                          const SpfLibrary& lib);

// DR generalist weights on a library, the default shrinkage anchor.
Vec generalist_anchor(const StackConfig& cfg, const StudyCollection& c, const SpfLibrary& lib);

StackedModel fit(const StackConfig& cfg, const StudyCollection& c);
// Weights for a fixed library, skipping SPF training.
StackedModel fit_library(const StackConfig& cfg, const StudyCollection& c, SpfLibrary lib);

Vec predict_stacked(const StackedModel& m, const Mat& X);
Vec predict_stacked(const SpfLibrary& lib, const Vec& w, const Mat& X);

// Collection and LTS with sample (i, k) removed; later samples of study k shift down.
std::pair<StudyCollection, TrainingSetList> remove_sample(const StudyCollection& c,
                                                          const TrainingSetList& lts, Index i,
                                                          Index k);

LambdaSelection select_lambda_loo(const StackConfig& cfg, const StudyCollection& c, Index k,
                                  const std::vector<double>& grid, bool refine = false);

struct IterativeResult {
  Vec weights;                     // final w_{g,av}
  std::vector<Vec> trajectory;     // w_{g,av} after Step 2 (index 0) and after each round
  std::vector<std::vector<double>> lambdas;  // per round, per study
  SpfLibrary library;
  Index rounds = 0;
  bool converged = false;
};

struct IterativeOptions {
  std::vector<double> grid = default_lambda_grid();
  Index max_rounds = 50;
  double tol = 1e-6;
  bool fast_loo = false;
  // Continuous lambda selection; a pure grid argmin can hop between grid points forever.
  bool refine_lambda = true;
  SolveOptions solver;
};

IterativeResult iterative_generalist_average(const StudyCollection& c,
                                             const std::vector<LearnerSpec>& specs,
                                             const IterativeOptions& opt = {});

}  // namespace mstack
