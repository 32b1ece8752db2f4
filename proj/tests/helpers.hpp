#pragma once

#include "mstack/data_model.hpp"
#include "mstack/rng.hpp"

#include <vector>

namespace mstack::testing {

// Random collection with Gaussian features and responses.
inline StudyCollection random_collection(std::vector<Index> n, Index p, RandomStream& rs) {
  std::vector<Study> studies;
  for (std::size_t k = 0; k < n.size(); ++k) {
    Study s;
    s.id = "s" + std::to_string(k + 1);
    s.X.resize(n[k], p);
    s.y.resize(n[k]);
    for (Index i = 0; i < n[k]; ++i) {
      for (Index j = 0; j < p; ++j) s.X(i, j) = rs.normal();
      s.y(i) = rs.normal(static_cast<double>(k), 1.0);
    }
    studies.push_back(std::move(s));
  }
  return StudyCollection(std::move(studies));
}

// Two-study collection without covariates whose study means are m1 and m2.
inline StudyCollection ex1_collection(double m1, double m2, Index n = 4) {
  std::vector<Study> studies(2);
  const double mean[2] = {m1, m2};
  for (int k = 0; k < 2; ++k) {
    studies[k].id = std::to_string(k + 1);
    studies[k].X.resize(n, 0);
    studies[k].y.resize(n);
    for (Index i = 0; i < n; ++i) studies[k].y(i) = mean[k] + (i % 2 == 0 ? 0.5 : -0.5) * (k + 1);
    if (n % 2 == 1) studies[k].y(n - 1) = mean[k];
  }
  return StudyCollection(std::move(studies));
}

inline Vec random_simplex(Index d, RandomStream& rs) {
  Vec w(d);
  for (Index i = 0; i < d; ++i) w(i) = -std::log(1.0 - rs.uniform());
  return w / w.sum();
}

inline Vec random_vec(Index d, RandomStream& rs, double sd = 1.0) {
  Vec v(d);
  for (Index i = 0; i < d; ++i) v(i) = rs.normal(0.0, sd);
  return v;
}

}  // namespace mstack::testing
