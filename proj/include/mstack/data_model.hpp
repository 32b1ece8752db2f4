#pragma once

#include "mstack/common.hpp"

#include <set>
#include <string>
#include <vector>

namespace mstack {

// Indices are zero-based throughout the library; the CLI and file formats
// present studies by id and in file order.
struct Study {
  std::string id;
  Vec y;
  Mat X;  // n x p, p may be 0

  Index n() const { return y.size(); }
  Index p() const { return X.cols(); }
};

class StudyCollection {
 public:
  StudyCollection() = default;
  explicit StudyCollection(std::vector<Study> studies);

  Index K() const { return static_cast<Index>(studies_.size()); }
  Index p() const { return p_; }
  Index n(Index k) const { return studies_[k].n(); }
  Index total_n() const { return offsets_.back(); }
  // Row of sample (i, k) in the stacked (all studies) layout.
  Index row(Index i, Index k) const { return offsets_[k] + i; }
  Index offset(Index k) const { return offsets_[k]; }
  const Study& operator[](Index k) const { return studies_[k]; }
  const std::vector<Study>& studies() const { return studies_; }

  Mat stacked_X() const;
  Vec stacked_y() const;

 private:
  std::vector<Study> studies_;
  std::vector<Index> offsets_{0};
  Index p_ = 0;
};

struct SamplePair {
  Index i;
  Index k;
  auto operator<=>(const SamplePair&) const = default;
};

using IndexSet = std::vector<SamplePair>;

struct TrainingSetList {
  std::vector<IndexSet> sets;

  Index T() const { return static_cast<Index>(sets.size()); }
  // s_t: the distinct studies that contribute to D_t.
  std::set<Index> support(Index t) const;
  bool study_specific(Index K) const;
};

TrainingSetList study_specific_lts(const StudyCollection& c);
void validate_lts(const TrainingSetList& lts, const StudyCollection& c);

// Every sample of the collection except (i, k).
IndexSet all_but(const IndexSet& D, Index i, Index k);

Vec generalist_nu(Index K);
Vec specialist_nu(Index K, Index k);
void validate_nu(const Vec& nu, Index K);

struct FeasibleSet {
  enum class Kind { Simplex, Box, Free };
  Kind kind = Kind::Simplex;
  double lower = 0.0;
  double upper = 1.0;

  static FeasibleSet simplex() { return {}; }
  static FeasibleSet free() { return {Kind::Free, 0.0, 0.0}; }
  static FeasibleSet box(double lo, double hi);
};

std::string to_string(const FeasibleSet& W);

}  // namespace mstack
