#pragma once

#include "mstack/data_model.hpp"

#include <string>
#include <vector>

namespace mstack {

struct LearnerSpec {
  enum class Kind { MeanOnly, OLS, Ridge };
  Kind kind = Kind::MeanOnly;
  double alpha = 0.0;
  // OLS only: substitute Ridge(1e-8) when the design is numerically singular.
  bool fallback = false;

  static LearnerSpec mean_only() { return {}; }
  static LearnerSpec ols(bool fallback = false) { return {Kind::OLS, 0.0, fallback}; }
  static LearnerSpec ridge(double alpha);
};

// "mean", "ols", "ols+fallback", "ridge:ALPHA"
LearnerSpec parse_learner(const std::string& s);
std::string to_string(const LearnerSpec& s);

constexpr double kSingularCondition = 1e12;
constexpr double kFallbackRidge = 1e-8;

// A fitted single-set prediction function. MeanOnly holds one coefficient
// (the training mean); linear kinds hold p slopes and no intercept.
struct Spf {
  LearnerSpec learner;
  Vec coef;
  bool used_fallback = false;

  double intercept() const { return learner.kind == LearnerSpec::Kind::MeanOnly ? coef(0) : 0.0; }
  // Zero-length for MeanOnly.
  Vec slope(Index p) const;
};

Spf train(const LearnerSpec& spec, const StudyCollection& c, const IndexSet& D);
Vec predict(const Spf& f, const Mat& X);

// Cheap refits of one SPF with a single training sample removed.
// Matches train() on the reduced set up to rounding.
class LooDowndater {
 public:
  LooDowndater(const LearnerSpec& spec, const StudyCollection& c, const IndexSet& D,
               const Spf& full);
  Spf without(Index i, Index k) const;
  bool exact() const { return exact_; }

 private:
  const StudyCollection* c_;
  Spf full_;
  Index m_ = 0;
  std::vector<SamplePair> members_;
  Eigen::LDLT<Mat> A_;
  bool exact_ = true;
  LearnerSpec spec_;
  IndexSet D_;
};

// T x L grid of SPFs; flat index j = t * L + l.
struct SpfLibrary {
  std::vector<LearnerSpec> learners;
  TrainingSetList lts;
  std::vector<Spf> spfs;

  Index T() const { return lts.T(); }
  Index L() const { return static_cast<Index>(learners.size()); }
  Index J() const { return T() * L(); }
  const Spf& at(Index t, Index l) const { return spfs[t * L() + l]; }
  Index set_of(Index j) const { return j / L(); }
};

SpfLibrary train_library(const std::vector<LearnerSpec>& specs, const StudyCollection& c,
                         const TrainingSetList& lts);

// (sum_k n_k) x J, rows stacked in study order.
Mat prediction_matrix(const SpfLibrary& lib, const StudyCollection& c);
// Predictions of every SPF on an arbitrary design.
Mat prediction_matrix(const SpfLibrary& lib, const Mat& X);

}  // namespace mstack
