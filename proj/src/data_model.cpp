#include "mstack/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mstack {

const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DuplicatePair: return "DuplicatePair";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::FoldTooSmall: return "FoldTooSmall";
    case ErrorCode::DegenerateScaling: return "DegenerateScaling";
    case ErrorCode::InsufficientStudies: return "InsufficientStudies";
    case ErrorCode::StudyTooSmall: return "StudyTooSmall";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::Undefined: return "Undefined";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Error";
}

StudyCollection::StudyCollection(std::vector<Study> studies) : studies_(std::move(studies)) {
  if (studies_.empty()) throw Error(ErrorCode::DataError, "collection has no studies");
  p_ = studies_.front().p();
  std::unordered_set<std::string> ids;
  for (const auto& s : studies_) {
    if (s.n() < 1) throw Error(ErrorCode::DataError, "study '" + s.id + "' is empty");
    if (s.X.rows() != s.n())
      throw Error(ErrorCode::DataError, "study '" + s.id + "': X rows differ from y length");
    if (s.p() != p_)
      throw Error(ErrorCode::DataError, "study '" + s.id + "': feature width differs");
    if (!s.y.allFinite() || !s.X.allFinite())
      throw Error(ErrorCode::DataError, "study '" + s.id + "' contains non-finite values");
    if (!ids.insert(s.id).second)
      throw Error(ErrorCode::DataError, "duplicate study id '" + s.id + "'");
    offsets_.push_back(offsets_.back() + s.n());
  }
}

Mat StudyCollection::stacked_X() const {
  Mat X(total_n(), p_);
  for (Index k = 0; k < K(); ++k) X.middleRows(offsets_[k], n(k)) = studies_[k].X;
  return X;
}

Vec StudyCollection::stacked_y() const {
  Vec y(total_n());
  for (Index k = 0; k < K(); ++k) y.segment(offsets_[k], n(k)) = studies_[k].y;
  return y;
}

std::set<Index> TrainingSetList::support(Index t) const {
  std::set<Index> s;
  for (const auto& pr : sets[t]) s.insert(pr.k);
  return s;
}

bool TrainingSetList::study_specific(Index K) const {
  if (T() != K) return false;
  for (Index t = 0; t < T(); ++t) {
    auto s = support(t);
    if (s.size() != 1 || *s.begin() != t) return false;
  }
  return true;
}

TrainingSetList study_specific_lts(const StudyCollection& c) {
  TrainingSetList lts;
  for (Index k = 0; k < c.K(); ++k) {
    IndexSet D;
    D.reserve(c.n(k));
    for (Index i = 0; i < c.n(k); ++i) D.push_back({i, k});
    lts.sets.push_back(std::move(D));
  }
  return lts;
}

void validate_lts(const TrainingSetList& lts, const StudyCollection& c) {
  if (lts.sets.empty()) throw Error(ErrorCode::EmptySet, "training-set list is empty");
  for (Index t = 0; t < lts.T(); ++t) {
    const auto& D = lts.sets[t];
    if (D.empty()) throw Error(ErrorCode::EmptySet, "D_" + std::to_string(t + 1));
    std::set<SamplePair> seen;
    for (const auto& pr : D) {
      if (pr.k < 0 || pr.k >= c.K() || pr.i < 0 || pr.i >= c.n(pr.k)) {
        std::ostringstream m;
        m << "t=" << t + 1 << " i=" << pr.i + 1 << " k=" << pr.k + 1;
        throw Error(ErrorCode::IndexOutOfRange, m.str());
      }
      if (!seen.insert(pr).second) {
        std::ostringstream m;
        m << "t=" << t + 1 << " i=" << pr.i + 1 << " k=" << pr.k + 1;
        throw Error(ErrorCode::DuplicatePair, m.str());
      }
    }
  }
}

IndexSet all_but(const IndexSet& D, Index i, Index k) {
  IndexSet out;
  out.reserve(D.size());
  for (const auto& pr : D)
    if (!(pr.i == i && pr.k == k)) out.push_back(pr);
  return out;
}

Vec generalist_nu(Index K) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "K must be positive");
  return Vec::Constant(K, 1.0 / static_cast<double>(K));
}

Vec specialist_nu(Index K, Index k) {
  if (K < 1 || k < 0 || k >= K)
    throw Error(ErrorCode::InvalidArgument, "study index out of range");
  return Vec::Unit(K, k);
}

void validate_nu(const Vec& nu, Index K) {
  if (nu.size() != K) throw Error(ErrorCode::ShapeMismatch, "nu length differs from K");
  if (!nu.allFinite() || nu.minCoeff() < 0.0)
    throw Error(ErrorCode::InvalidArgument, "nu must be nonnegative");
  if (std::abs(nu.sum() - 1.0) > 1e-12)
    throw Error(ErrorCode::InvalidArgument, "nu must sum to one");
}

FeasibleSet FeasibleSet::box(double lo, double hi) {
  if (!(lo <= hi)) throw Error(ErrorCode::InvalidArgument, "box requires lower <= upper");
  return {Kind::Box, lo, hi};
}

std::string to_string(const FeasibleSet& W) {
  switch (W.kind) {
    case FeasibleSet::Kind::Simplex: return "simplex";
    case FeasibleSet::Kind::Free: return "free";
    case FeasibleSet::Kind::Box: {
      std::ostringstream s;
      s.precision(17);
      s << "box:" << W.lower << "," << W.upper;
      return s.str();
    }
  }
  return "?";
}

}  // namespace mstack
