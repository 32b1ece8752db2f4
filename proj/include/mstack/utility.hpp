#pragma once

#include "mstack/data_model.hpp"
#include "mstack/learners.hpp"

#include <cstdint>
#include <vector>

namespace mstack {

// Squared-error utility estimate  U(w) = -(w' Sigma w - 2 b' w + c).
template <typename Scalar>
struct UtilityQuadratic {
  using MatS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VecS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MatS Sigma;
  VecS b;
  Scalar c = Scalar(0);

  UtilityQuadratic() = default;
  UtilityQuadratic(MatS S, VecS bb, Scalar cc)
      : Sigma(std::move(S)), b(std::move(bb)), c(cc) {}

  Index dim() const { return b.size(); }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& w) const {
    return -(w.dot(Sigma * w) - Scalar(2) * b.dot(w) + c);
  }

  template <typename Derived>
  VecS gradient(const Eigen::MatrixBase<Derived>& w) const {
    return Scalar(-2) * (Sigma * w - b);
  }

  template <typename NewScalar>
  UtilityQuadratic<NewScalar> cast() const {
    return {Sigma.template cast<NewScalar>(), b.template cast<NewScalar>(),
            static_cast<NewScalar>(c)};
  }

  UtilityQuadratic& operator+=(const UtilityQuadratic& o) {
    Sigma += o.Sigma;
    b += o.b;
    c += o.c;
    return *this;
  }
  UtilityQuadratic& operator*=(Scalar s) {
    Sigma *= s;
    b *= s;
    c *= s;
    return *this;
  }
};

using Quadratic = UtilityQuadratic<double>;

// Mean squared error of the ensemble w; the negated utility.
template <typename Scalar, typename Derived>
Scalar mse(const UtilityQuadratic<Scalar>& q, const Eigen::MatrixBase<Derived>& w) {
  return -q(w);
}

// Û - lambda ||w - anchor||^2.
template <typename Scalar>
UtilityQuadratic<Scalar> apply_penalty(
    UtilityQuadratic<Scalar> q, Scalar lambda,
    const typename UtilityQuadratic<Scalar>::VecS& anchor) {
  if (anchor.size() != q.dim())
    throw Error(ErrorCode::ShapeMismatch, "penalty anchor length differs from quadratic");
  if (!(lambda >= Scalar(0))) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  q.Sigma.diagonal().array() += lambda;
  q.b += lambda * anchor;
  q.c += lambda * anchor.squaredNorm();
  return q;
}

// Per-study normalized second moments of the prediction matrix:
// G_k = P_k'P_k / n_k, h_k = P_k'y_k / n_k, c_k = y_k'y_k / n_k.
struct StudyMoments {
  std::vector<Mat> G;
  std::vector<Vec> h;
  Vec c;
};

StudyMoments study_moments(const Mat& P, const StudyCollection& coll);
// Moments straight from the library; studies with active(k) == 0 are left at zero.
StudyMoments study_moments(const SpfLibrary& lib, const StudyCollection& coll,
                           const Vec* active = nullptr);

Quadratic dr_utility(const SpfLibrary& lib, const StudyCollection& coll, const Vec& nu);
Quadratic dr_utility(const StudyMoments& m, const Vec& nu);

struct WsPartition {
  Index M = 5;
  Index R = 1;
  // fold[r][k][i] in [0, M)
  std::vector<std::vector<std::vector<int>>> fold;
  // Test override: every held-out fold is the whole study and training keeps all data.
  bool full_copy = false;
};

// Seeded shuffle per (repeat, study); fold sizes differ by at most one.
WsPartition make_ws_partition(const StudyCollection& coll, Index M, Index R, std::uint64_t seed,
                              std::uint32_t replicate = 0);
WsPartition full_copy_partition(const StudyCollection& coll, Index M);

// Held-out prediction matrix for one repeat: row (i,k) holds the SPFs retrained
// without the fold containing (i,k).
Mat ws_heldout_predictions(const std::vector<LearnerSpec>& specs, const StudyCollection& coll,
                           const TrainingSetList& lts, const WsPartition& part, Index r);

Quadratic ws_utility(const std::vector<LearnerSpec>& specs, const StudyCollection& coll,
                     const TrainingSetList& lts, const Vec& nu, const WsPartition& part);

// Validation coefficient a(k, t) = 1(k not in s_t) / (1 - sum_{k' in s_t} nu_k'), K x T.
Mat cs_scaling(const TrainingSetList& lts, Index K, const Vec& nu);

Quadratic cs_utility(const SpfLibrary& lib, const StudyCollection& coll, const Vec& nu);
Quadratic cs_utility(const StudyMoments& m, const SpfLibrary& lib, Index K, const Vec& nu);

// Cross-set utility with nu_k = sum_l w_{k,l}; study-specific libraries only.
// Not quadratic in w; evaluated exactly. Where nu_k = 1 the renormalized weights
// are undefined and the value is closed by its upper envelope over directions.
class SelfNuObjective {
 public:
  SelfNuObjective(const SpfLibrary& lib, const StudyCollection& coll);
  double value(const Vec& w) const;
  Vec gradient(const Vec& w) const;
  Index dim() const { return J_; }
  Index block() const { return L_; }
  // Supremum of the utility as nu_k -> 1; optionally the maximizing direction
  // over the other studies' SPFs (zero on block k).
  double vertex_value(Index k, Vec* direction = nullptr) const;

 private:
  double outside_mass(const Vec& w, Index k) const;
  StudyMoments m_;
  Index K_, L_, J_;
};

// Average over the studies outside {t, t'} of n_k^{-1} sum_i Y_t(x_ik) Y_t'(x_ik);
// one entry per learner pair.
Mat unbiased_sigma_g(const SpfLibrary& lib, const StudyCollection& coll, Index t, Index tp);

}  // namespace mstack
