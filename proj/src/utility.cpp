#include "mstack/utility.hpp"

#include "mstack/qp.hpp"
#include "mstack/rng.hpp"

#include <numeric>

namespace mstack {

StudyMoments study_moments(const Mat& P, const StudyCollection& coll) {
  if (P.rows() != coll.total_n())
    throw Error(ErrorCode::ShapeMismatch, "prediction matrix rows differ from sample count");
  StudyMoments m;
  m.c.resize(coll.K());
  for (Index k = 0; k < coll.K(); ++k) {
    const double inv = 1.0 / static_cast<double>(coll.n(k));
    const auto Pk = P.middleRows(coll.offset(k), coll.n(k));
    Mat G = Mat::Zero(P.cols(), P.cols());
    G.selfadjointView<Eigen::Lower>().rankUpdate(Pk.transpose(), inv);
    m.G.push_back(G.selfadjointView<Eigen::Lower>());
    m.h.push_back(inv * (Pk.transpose() * coll[k].y));
    m.c(k) = inv * coll[k].y.squaredNorm();
  }
  return m;
}

StudyMoments study_moments(const SpfLibrary& lib, const StudyCollection& coll,
                           const Vec* active) {
  StudyMoments m;
  const Index J = lib.J();
  m.c = Vec::Zero(coll.K());
  for (Index k = 0; k < coll.K(); ++k) {
    if (active && (*active)(k) == 0.0) {
      m.G.push_back(Mat::Zero(J, J));
      m.h.push_back(Vec::Zero(J));
      continue;
    }
    const double inv = 1.0 / static_cast<double>(coll.n(k));
    const Mat Pk = prediction_matrix(lib, coll[k].X);
    Mat G = Mat::Zero(J, J);
    G.selfadjointView<Eigen::Lower>().rankUpdate(Pk.transpose(), inv);
    m.G.push_back(G.selfadjointView<Eigen::Lower>());
    m.h.push_back(inv * (Pk.transpose() * coll[k].y));
    m.c(k) = inv * coll[k].y.squaredNorm();
  }
  return m;
}

Quadratic dr_utility(const StudyMoments& m, const Vec& nu) {
  const Index K = static_cast<Index>(m.G.size());
  validate_nu(nu, K);
  const Index J = m.G.front().rows();
  Quadratic q(Mat::Zero(J, J), Vec::Zero(J), 0.0);
  for (Index k = 0; k < K; ++k) {
    if (nu(k) == 0.0) continue;
    q.Sigma += nu(k) * m.G[k];
    q.b += nu(k) * m.h[k];
    q.c += nu(k) * m.c(k);
  }
  return q;
}

Quadratic dr_utility(const SpfLibrary& lib, const StudyCollection& coll, const Vec& nu) {
  validate_nu(nu, coll.K());
  return dr_utility(study_moments(lib, coll, &nu), nu);
}

WsPartition make_ws_partition(const StudyCollection& coll, Index M, Index R, std::uint64_t seed,
                              std::uint32_t replicate) {
  if (M < 2) throw Error(ErrorCode::InvalidArgument, "CVws needs at least 2 folds");
  if (R < 1) throw Error(ErrorCode::InvalidArgument, "CVws needs at least 1 repeat");
  WsPartition part;
  part.M = M;
  part.R = R;
  part.fold.resize(R);
  for (Index r = 0; r < R; ++r) {
    for (Index k = 0; k < coll.K(); ++k) {
      const Index n = coll.n(k);
      if (n < M)
        throw Error(ErrorCode::FoldTooSmall, "study '" + coll[k].id + "' has " +
                                                 std::to_string(n) + " samples for " +
                                                 std::to_string(M) + " folds");
      RandomStream rs(seed, replicate, static_cast<std::uint32_t>(k),
                      purpose::kFolds + static_cast<std::uint32_t>(r));
      std::vector<int> order(n), label(M);
      std::iota(order.begin(), order.end(), 0);
      std::iota(label.begin(), label.end(), 0);
      for (Index a = n - 1; a > 0; --a)
        std::swap(order[a], order[rs.below(static_cast<std::uint32_t>(a + 1))]);
      for (Index a = M - 1; a > 0; --a)
        std::swap(label[a], label[rs.below(static_cast<std::uint32_t>(a + 1))]);
      std::vector<int> f(n);
      for (Index pos = 0; pos < n; ++pos) f[order[pos]] = label[pos % M];
      part.fold[r].push_back(std::move(f));
    }
  }
  return part;
}

WsPartition full_copy_partition(const StudyCollection& coll, Index M) {
  WsPartition part;
  part.M = M;
  part.R = 1;
  part.full_copy = true;
  part.fold.resize(1);
  for (Index k = 0; k < coll.K(); ++k) part.fold[0].emplace_back(coll.n(k), 0);
  return part;
}

Mat ws_heldout_predictions(const std::vector<LearnerSpec>& specs, const StudyCollection& coll,
                           const TrainingSetList& lts, const WsPartition& part, Index r) {
  const Index L = static_cast<Index>(specs.size());
  const Index J = lts.T() * L;
  if (part.full_copy) {
    // Every fold is the whole study, so each held-out prediction uses the full-data SPFs.
    return prediction_matrix(train_library(specs, coll, lts), coll);
  }
  const auto& fold = part.fold[r];
  Mat P(coll.total_n(), J);
  for (Index m = 0; m < part.M; ++m) {
    std::vector<Spf> spfs;
    spfs.reserve(J);
    for (Index t = 0; t < lts.T(); ++t) {
      IndexSet D;
      for (const auto& pr : lts.sets[t])
        if (fold[pr.k][pr.i] != m) D.push_back(pr);
      for (const auto& s : specs) {
        try {
          if (D.empty()) throw Error(ErrorCode::EmptySet, "empty");
          spfs.push_back(train(s, coll, D));
        } catch (const Error& e) {
          throw Error(ErrorCode::FoldTooSmall, "retraining set " + std::to_string(t + 1) +
                                                   " without fold " + std::to_string(m + 1) +
                                                   ": " + e.what());
        }
      }
    }
    for (Index k = 0; k < coll.K(); ++k) {
      for (Index i = 0; i < coll.n(k); ++i) {
        if (fold[k][i] != m) continue;
        const Index row = coll.row(i, k);
        for (Index j = 0; j < J; ++j) {
          const Spf& f = spfs[j];
          P(row, j) = f.learner.kind == LearnerSpec::Kind::MeanOnly
                          ? f.coef(0)
                          : (coll.p() == 0 ? 0.0 : coll[k].X.row(i).dot(f.coef));
        }
      }
    }
  }
  return P;
}

Quadratic ws_utility(const std::vector<LearnerSpec>& specs, const StudyCollection& coll,
                     const TrainingSetList& lts, const Vec& nu, const WsPartition& part) {
  validate_nu(nu, coll.K());
  Quadratic acc;
  for (Index r = 0; r < part.R; ++r) {
    Quadratic q = dr_utility(study_moments(ws_heldout_predictions(specs, coll, lts, part, r), coll), nu);
    if (r == 0)
      acc = q;
    else
      acc += q;
  }
  acc *= 1.0 / static_cast<double>(part.R);
  return acc;
}

Mat cs_scaling(const TrainingSetList& lts, Index K, const Vec& nu) {
  validate_nu(nu, K);
  Mat a = Mat::Zero(K, lts.T());
  for (Index t = 0; t < lts.T(); ++t) {
    const auto s = lts.support(t);
    if (static_cast<Index>(s.size()) == K)
      throw Error(ErrorCode::DegenerateScaling,
                  "training set " + std::to_string(t + 1) + " contains samples of every study");
    double mass = 0.0;
    for (Index k : s) mass += nu(k);
    const double denom = 1.0 - mass;
    for (Index k = 0; k < K; ++k) {
      if (s.count(k)) continue;
      if (nu(k) > 0.0 && !(denom > 0.0))
        throw Error(ErrorCode::DegenerateScaling,
                    "training set " + std::to_string(t + 1) + ": 1 - sum nu <= 0");
      a(k, t) = denom > 0.0 ? 1.0 / denom : 0.0;
    }
  }
  return a;
}

Quadratic cs_utility(const StudyMoments& m, const SpfLibrary& lib, Index K, const Vec& nu) {
  const Mat a = cs_scaling(lib.lts, K, nu);
  const Index J = lib.J();
  Quadratic q(Mat::Zero(J, J), Vec::Zero(J), 0.0);
  Vec d(J);
  for (Index k = 0; k < K; ++k) {
    if (nu(k) == 0.0) continue;
    for (Index j = 0; j < J; ++j) d(j) = a(k, lib.set_of(j));
    q.Sigma += nu(k) * (d.asDiagonal() * m.G[k] * d.asDiagonal());
    q.b += nu(k) * d.cwiseProduct(m.h[k]);
    q.c += nu(k) * m.c(k);
  }
  return q;
}

Quadratic cs_utility(const SpfLibrary& lib, const StudyCollection& coll, const Vec& nu) {
  validate_nu(nu, coll.K());
  return cs_utility(study_moments(lib, coll, &nu), lib, coll.K(), nu);
}

SelfNuObjective::SelfNuObjective(const SpfLibrary& lib, const StudyCollection& coll)
    : K_(coll.K()), L_(lib.L()), J_(lib.J()) {
  if (!lib.lts.study_specific(coll.K()))
    throw Error(ErrorCode::ConfigError, "self-nu mode requires the study-specific LTS");
  if (K_ < 2) throw Error(ErrorCode::InsufficientStudies, "self-nu mode needs K >= 2");
  m_ = study_moments(prediction_matrix(lib, coll), coll);
}

namespace {
constexpr double kTinyMass = 1e-14;
}

// 1 - nu_k on the simplex, summed directly to avoid cancellation near nu_k = 1.
double SelfNuObjective::outside_mass(const Vec& w, Index k) const {
  return w.head(k * L_).sum() + w.tail(J_ - (k + 1) * L_).sum();
}

double SelfNuObjective::vertex_value(Index k, Vec* direction) const {
  const Index m = J_ - L_;
  Mat G(m, m);
  Vec h(m);
  auto other = [&](Index i) { return i < k * L_ ? i : i + L_; };
  for (Index i = 0; i < m; ++i) {
    h(i) = m_.h[k](other(i));
    for (Index j = 0; j < m; ++j) G(i, j) = m_.G[k](other(i), other(j));
  }
  const auto rep = maximize(Quadratic(G, h, m_.c(k)), FeasibleSet::simplex());
  if (direction) {
    direction->setZero(J_);
    for (Index i = 0; i < m; ++i) (*direction)(other(i)) = rep.w(i);
  }
  return rep.objective;
}

double SelfNuObjective::value(const Vec& w) const {
  double u = 0.0;
  for (Index k = 0; k < K_; ++k) {
    const double nuk = w.segment(k * L_, L_).sum();
    if (nuk == 0.0) continue;
    const double d = outside_mass(w, k);
    if (d <= kTinyMass) {
      u += nuk * vertex_value(k);
      continue;
    }
    Vec v = w / d;
    v.segment(k * L_, L_).setZero();
    u -= nuk * (m_.c(k) + v.dot(m_.G[k] * v) - 2.0 * m_.h[k].dot(v));
  }
  return u;
}

Vec SelfNuObjective::gradient(const Vec& w) const {
  Vec g = Vec::Zero(J_);
  for (Index k = 0; k < K_; ++k) {
    const double nuk = w.segment(k * L_, L_).sum();
    const double d = outside_mass(w, k);
    double err = m_.c(k);
    if (d > kTinyMass) {
      Vec v = w;
      v.segment(k * L_, L_).setZero();
      const Vec Gv = m_.G[k] * v;
      const double quad = v.dot(Gv), lin = m_.h[k].dot(v);
      err += quad / (d * d) - 2.0 * lin / d;
      // d err / d v (masked) and d err / d d, chained through d = 1 - nu_k.
      Vec dv = 2.0 * Gv / (d * d) - 2.0 * m_.h[k] / d;
      dv.segment(k * L_, L_).setZero();
      const double dd = -2.0 * quad / (d * d * d) + 2.0 * lin / (d * d);
      g -= nuk * dv;
      g.segment(k * L_, L_).array() += nuk * dd;
    }
    g.segment(k * L_, L_).array() -= err;
  }
  return g;
}

Mat unbiased_sigma_g(const SpfLibrary& lib, const StudyCollection& coll, Index t, Index tp) {
  const Index K = coll.K();
  if (K < 3) throw Error(ErrorCode::InsufficientStudies, "unbiased Sigma_g needs K >= 3");
  if (!lib.lts.study_specific(K))
    throw Error(ErrorCode::InvalidArgument, "unbiased Sigma_g needs the study-specific LTS");
  if (t < 0 || t >= K || tp < 0 || tp >= K)
    throw Error(ErrorCode::IndexOutOfRange, "set index out of range");
  const Index L = lib.L();
  Mat S = Mat::Zero(L, L);
  Index used = 0;
  for (Index k = 0; k < K; ++k) {
    if (k == t || k == tp) continue;
    const Mat& X = coll[k].X;
    for (Index l = 0; l < L; ++l) {
      const Vec a = predict(lib.at(t, l), X);
      for (Index lp = 0; lp < L; ++lp)
        S(l, lp) += a.dot(predict(lib.at(tp, lp), X)) / static_cast<double>(coll.n(k));
    }
    ++used;
  }
  return S / static_cast<double>(used);
}

}  // namespace mstack
