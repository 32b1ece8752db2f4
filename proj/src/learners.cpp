#include "mstack/learners.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mstack {

LearnerSpec LearnerSpec::ridge(double alpha) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw Error(ErrorCode::InvalidArgument, "ridge alpha must be nonnegative");
  return {Kind::Ridge, alpha, false};
}

LearnerSpec parse_learner(const std::string& s) {
  if (s == "mean") return LearnerSpec::mean_only();
  if (s == "ols") return LearnerSpec::ols();
  if (s == "ols+fallback") return LearnerSpec::ols(true);
  if (s.rfind("ridge:", 0) == 0) {
    const std::string a = s.substr(6);
    double alpha = 0.0;
    auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), alpha);
    if (ec != std::errc() || ptr != a.data() + a.size())
      throw Error(ErrorCode::ConfigError, "--learner: bad ridge alpha '" + a + "'");
    if (!(alpha >= 0.0)) throw Error(ErrorCode::ConfigError, "--learner: ridge alpha < 0");
    return LearnerSpec::ridge(alpha);
  }
  throw Error(ErrorCode::ConfigError, "--learner: unknown learner '" + s + "'");
}

std::string to_string(const LearnerSpec& s) {
  switch (s.kind) {
    case LearnerSpec::Kind::MeanOnly: return "mean";
    case LearnerSpec::Kind::OLS: return s.fallback ? "ols+fallback" : "ols";
    case LearnerSpec::Kind::Ridge: {
      std::ostringstream o;
      o.precision(17);
      o << "ridge:" << s.alpha;
      return o.str();
    }
  }
  return "?";
}

Vec Spf::slope(Index p) const {
  if (learner.kind == LearnerSpec::Kind::MeanOnly) return Vec::Zero(p);
  return coef;
}

namespace {

void gather(const StudyCollection& c, const IndexSet& D, Mat& X, Vec& y) {
  const Index m = static_cast<Index>(D.size());
  X.resize(m, c.p());
  y.resize(m);
  for (Index r = 0; r < m; ++r) {
    const auto& s = c[D[r].k];
    y(r) = s.y(D[r].i);
    if (c.p() > 0) X.row(r) = s.X.row(D[r].i);
  }
}

Vec ridge_solve(const Mat& X, const Vec& y, double alpha) {
  const Index m = X.rows(), p = X.cols();
  Mat A(m + p, p);
  A.topRows(m) = X;
  A.bottomRows(p) = std::sqrt(alpha) * Mat::Identity(p, p);
  Vec rhs = Vec::Zero(m + p);
  rhs.head(m) = y;
  return A.colPivHouseholderQr().solve(rhs);
}

}  // namespace

Spf train(const LearnerSpec& spec, const StudyCollection& c, const IndexSet& D) {
  if (D.empty()) throw Error(ErrorCode::EmptySet, "cannot train on an empty set");
  Mat X;
  Vec y;
  gather(c, D, X, y);
  Spf f;
  f.learner = spec;
  const Index p = c.p();
  switch (spec.kind) {
    case LearnerSpec::Kind::MeanOnly:
      f.coef = Vec::Constant(1, y.mean());
      break;
    case LearnerSpec::Kind::OLS: {
      if (p == 0) {
        f.coef = Vec(0);
        break;
      }
      bool singular = X.rows() <= p;
      Eigen::ColPivHouseholderQR<Mat> qr;
      if (!singular) {
        qr.compute(X);
        const double top = std::abs(qr.matrixQR()(0, 0));
        const double bot = std::abs(qr.matrixQR()(p - 1, p - 1));
        singular = qr.rank() < p || !(bot > 0.0) || top / bot > kSingularCondition;
      }
      if (singular) {
        if (!spec.fallback)
          throw Error(ErrorCode::SingularDesign,
                      "OLS design with " + std::to_string(X.rows()) + " rows and p=" +
                          std::to_string(p) + " is numerically singular");
        f.coef = ridge_solve(X, y, kFallbackRidge);
        f.used_fallback = true;
      } else {
        f.coef = qr.solve(y);
      }
      break;
    }
    case LearnerSpec::Kind::Ridge:
      if (p == 0) {
        f.coef = Vec(0);
      } else if (spec.alpha == 0.0) {
        f.coef = X.completeOrthogonalDecomposition().solve(y);
      } else {
        f.coef = ridge_solve(X, y, spec.alpha);
      }
      break;
  }
  if (!f.coef.allFinite()) throw Error(ErrorCode::SingularDesign, "non-finite coefficients");
  return f;
}

Vec predict(const Spf& f, const Mat& X) {
  if (f.learner.kind == LearnerSpec::Kind::MeanOnly) return Vec::Constant(X.rows(), f.coef(0));
  if (X.cols() != f.coef.size())
    throw Error(ErrorCode::ShapeMismatch, "feature width " + std::to_string(X.cols()) +
                                              " but SPF expects " +
                                              std::to_string(f.coef.size()));
  return X * f.coef;
}

LooDowndater::LooDowndater(const LearnerSpec& spec, const StudyCollection& c, const IndexSet& D,
                           const Spf& full)
    : c_(&c), full_(full), m_(static_cast<Index>(D.size())), members_(D), spec_(spec), D_(D) {
  std::sort(members_.begin(), members_.end());
  if (spec.kind == LearnerSpec::Kind::MeanOnly || c.p() == 0) return;
  if (full.used_fallback) {
    exact_ = false;
    return;
  }
  Mat X;
  Vec y;
  gather(c, D, X, y);
  const double alpha = spec.kind == LearnerSpec::Kind::Ridge ? spec.alpha : 0.0;
  Mat A = X.transpose() * X;
  A.diagonal().array() += alpha;
  A_.compute(A);
  if (A_.info() != Eigen::Success || X.rows() <= c.p() + 1) exact_ = false;
}

Spf LooDowndater::without(Index i, Index k) const {
  if (!std::binary_search(members_.begin(), members_.end(), SamplePair{i, k})) return full_;
  if (!exact_) return train(spec_, *c_, all_but(D_, i, k));
  Spf f = full_;
  const double yi = (*c_)[k].y(i);
  if (spec_.kind == LearnerSpec::Kind::MeanOnly) {
    if (m_ < 2) throw Error(ErrorCode::EmptySet, "cannot remove the only training sample");
    f.coef(0) = (static_cast<double>(m_) * full_.coef(0) - yi) / static_cast<double>(m_ - 1);
    return f;
  }
  if (c_->p() == 0) return f;
  const Vec x = (*c_)[k].X.row(i).transpose();
  const Vec Ax = A_.solve(x);
  const double h = x.dot(Ax);
  if (!(1.0 - h > 1e-8)) return train(spec_, *c_, all_but(D_, i, k));
  f.coef -= Ax * ((yi - x.dot(full_.coef)) / (1.0 - h));
  return f;
}

SpfLibrary train_library(const std::vector<LearnerSpec>& specs, const StudyCollection& c,
                         const TrainingSetList& lts) {
  if (specs.empty()) throw Error(ErrorCode::InvalidArgument, "no learners given");
  SpfLibrary lib;
  lib.learners = specs;
  lib.lts = lts;
  lib.spfs.reserve(lts.sets.size() * specs.size());
  for (const auto& D : lts.sets)
    for (const auto& s : specs) lib.spfs.push_back(train(s, c, D));
  return lib;
}

Mat prediction_matrix(const SpfLibrary& lib, const StudyCollection& c) {
  Mat P(c.total_n(), lib.J());
  for (Index k = 0; k < c.K(); ++k)
    for (Index j = 0; j < lib.J(); ++j)
      P.block(c.offset(k), j, c.n(k), 1) = predict(lib.spfs[j], c[k].X);
  return P;
}

Mat prediction_matrix(const SpfLibrary& lib, const Mat& X) {
  Mat P(X.rows(), lib.J());
  for (Index j = 0; j < lib.J(); ++j) P.col(j) = predict(lib.spfs[j], X);
  return P;
}

}  // namespace mstack
