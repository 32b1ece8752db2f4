#include "helpers.hpp"
#include "oracles.hpp"
#include "mstack/pipelines.hpp"
#include "mstack/sim_oracle.hpp"

#include <doctest.h>

using namespace mstack;
using namespace mstack::testing;


TEST_CASE("estimator quadratics equal their direct summation forms") {
  RandomStream rs(11, 0, 0, purpose::kMisc);
  for (int inst = 0; inst < 12; ++inst) {
    const Instance in = random_instance(rs, inst % 2 == 1);
    const auto& c = in.coll;
    const SpfLibrary lib = train_library(in.specs, c, in.lts);
    const Vec nu = inst % 3 == 0 ? specialist_nu(c.K(), 0) : generalist_nu(c.K());
    const Quadratic dr = dr_utility(lib, c, nu);
    const auto part = make_ws_partition(c, 3, 2, 99);
    const Quadratic ws = ws_utility(in.specs, c, in.lts, nu, part);
    CHECK((dr.Sigma - dr.Sigma.transpose()).norm() < 1e-10);
    CHECK(dr.Sigma.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > -1e-9);
    CHECK((ws.Sigma - ws.Sigma.transpose()).norm() < 1e-10);
    const Quadratic cs = cs_utility(lib, c, nu);
    CHECK((cs.Sigma - cs.Sigma.transpose()).norm() < 1e-10);
    for (int r = 0; r < 8; ++r) {
      const Vec w = random_vec(lib.J(), rs);
      CHECK(dr(w) == doctest::Approx(dr_direct(lib, c, nu, w)).epsilon(1e-10));
      CHECK(ws(w) == doctest::Approx(ws_direct(in.specs, c, in.lts, nu, part, w)).epsilon(1e-10));
      CHECK(cs(w) == doctest::Approx(cs_direct(lib, c, nu, w)).epsilon(1e-10));
    }
  }
}

TEST_CASE("single study, single mean SPF: DR utility is minus the within-sample variance") {
  const StudyCollection c({Study{"a", (Vec(4) << 1, 2, 4, 9).finished(), Mat::Zero(4, 0)}});
  const auto lib = train_library({LearnerSpec::mean_only()}, c, study_specific_lts(c));
  const Quadratic q = dr_utility(lib, c, generalist_nu(1));
  const Vec one = Vec::Ones(1);
  const double var = (c[0].y.array() - 4.0).square().mean();
  CHECK(q(one) == doctest::Approx(-var).epsilon(1e-12));
}

TEST_CASE("Example-1 DR quadratic") {
  const auto c = ex1_collection(1.3, -0.4, 6);
  const auto lib = train_library({LearnerSpec::mean_only()}, c, study_specific_lts(c));
  const Quadratic q = dr_utility(lib, c, generalist_nu(2));
  const double y1 = c[0].y.mean(), y2 = c[1].y.mean(), yy = (y1 + y2) / 2;
  Mat S(2, 2);
  S << y1 * y1, y1 * y2, y1 * y2, y2 * y2;
  CHECK((q.Sigma - S).norm() < 1e-12);
  CHECK((q.b - Vec((Vec(2) << y1 * yy, y2 * yy).finished())).norm() < 1e-12);
}

TEST_CASE("Example-1 within-study CV quadratic") {
  const Index M = 5;
  RandomStream rs(12, 0, 0, purpose::kMisc);
  std::vector<Study> st(2);
  for (int k = 0; k < 2; ++k) {
    st[k].id = std::to_string(k + 1);
    st[k].y = random_vec(20, rs) + Vec::Constant(20, 0.7 * k);
    st[k].X.resize(20, 0);
  }
  const StudyCollection c(std::move(st));
  const auto lts = study_specific_lts(c);
  const auto lib = train_library({LearnerSpec::mean_only()}, c, lts);
  const auto part = make_ws_partition(c, M, 1, 4);
  const Quadratic ws = ws_utility({LearnerSpec::mean_only()}, c, lts, generalist_nu(2), part);
  const Quadratic dr = dr_utility(lib, c, generalist_nu(2));

  Vec ybar(2);
  Mat fm = Mat::Zero(2, M);  // fold means
  for (int k = 0; k < 2; ++k) {
    ybar(k) = c[k].y.mean();
    Vec cnt = Vec::Zero(M);
    for (Index i = 0; i < 20; ++i) {
      fm(k, part.fold[0][k][i]) += c[k].y(i);
      cnt(part.fold[0][k][i]) += 1;
    }
    fm.row(k).array() /= cnt.transpose().array();
  }
  const double s11 = fm.row(0).squaredNorm() / M - ybar(0) * ybar(0);
  const double s22 = fm.row(1).squaredNorm() / M - ybar(1) * ybar(1);
  const double s12 = fm.row(0).dot(fm.row(1)) / M - ybar(0) * ybar(1);
  Mat S(2, 2);
  S << s11, s12, s12, s22;
  const double r = M - 1.0;
  CHECK((ws.Sigma - (dr.Sigma + S / (r * r))).norm() < 1e-10);
  const Vec db = (Vec(2) << s11 + s12, s22 + s12).finished() / (2 * r);
  CHECK((ws.b - (dr.b - db)).norm() < 1e-10);
}

TEST_CASE("within-study CV equals DR when studies are constant or folds are full copies") {
  std::vector<Study> st(2);
  st[0] = Study{"1", Vec::Constant(10, 2.0), Mat::Zero(10, 0)};
  st[1] = Study{"2", Vec::Constant(10, -1.0), Mat::Zero(10, 0)};
  const StudyCollection c(std::move(st));
  const auto lts = study_specific_lts(c);
  const auto lib = train_library({LearnerSpec::mean_only()}, c, lts);
  const Quadratic dr = dr_utility(lib, c, generalist_nu(2));
  const Quadratic ws =
      ws_utility({LearnerSpec::mean_only()}, c, lts, generalist_nu(2), make_ws_partition(c, 5, 1, 1));
  CHECK((ws.Sigma - dr.Sigma).norm() == 0.0);
  CHECK((ws.b - dr.b).norm() == 0.0);

  RandomStream rs(13, 0, 0, purpose::kMisc);
  const auto c2 = random_collection({9, 12}, 2, rs);
  const std::vector<LearnerSpec> specs{LearnerSpec::ols()};
  const auto l2 = train_library(specs, c2, study_specific_lts(c2));
  const Quadratic d2 = dr_utility(l2, c2, generalist_nu(2));
  const Quadratic w2 =
      ws_utility(specs, c2, study_specific_lts(c2), generalist_nu(2), full_copy_partition(c2, 5));
  CHECK((w2.Sigma - d2.Sigma).norm() < 1e-12);
  CHECK((w2.b - d2.b).norm() < 1e-12);
}

TEST_CASE("fold assignment is balanced and fails for tiny studies") {
  RandomStream rs(14, 0, 0, purpose::kMisc);
  const auto c = random_collection({13, 7}, 1, rs);
  const auto part = make_ws_partition(c, 5, 2, 3);
  for (Index r = 0; r < 2; ++r)
    for (Index k = 0; k < 2; ++k) {
      std::vector<int> cnt(5, 0);
      for (int f : part.fold[r][k]) ++cnt[f];
      CHECK(*std::max_element(cnt.begin(), cnt.end()) -
                *std::min_element(cnt.begin(), cnt.end()) <=
            1);
      CHECK(*std::min_element(cnt.begin(), cnt.end()) >= 1);
    }
  CHECK(part.fold[0] != part.fold[1]);
  CHECK_THROWS_WITH_AS(make_ws_partition(c, 8, 1, 3), doctest::Contains("FoldTooSmall"), Error);
}

TEST_CASE("Example-1 cross-set CV utility") {
  const auto c = ex1_collection(0.8, -1.7, 8);
  const auto lib = train_library({LearnerSpec::mean_only()}, c, study_specific_lts(c));
  const Quadratic q = cs_utility(lib, c, generalist_nu(2));
  const double y1 = c[0].y.mean(), y2 = c[1].y.mean();
  const double m2 = (c[0].y.squaredNorm() / 8 + c[1].y.squaredNorm() / 8) / 2;
  RandomStream rs(15, 0, 0, purpose::kMisc);
  for (int r = 0; r < 10; ++r) {
    const Vec w = random_simplex(2, rs);
    const double expect =
        -(2 * w(0) * w(0) * y1 * y1 + 2 * w(1) * w(1) * y2 * y2 - 2 * y1 * y2 + m2);
    CHECK(q(w) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("cross-set CV structure") {
  RandomStream rs(16, 0, 0, purpose::kMisc);
  auto c = random_collection({10, 12}, 2, rs);
  const std::vector<LearnerSpec> specs{LearnerSpec::ols()};
  const auto lts = study_specific_lts(c);
  const auto lib = train_library(specs, c, lts);

  SUBCASE("specialist target keeps only the other study's SPF") {
    const Quadratic q = cs_utility(lib, c, specialist_nu(2, 0));
    CHECK(q.Sigma(0, 0) == 0.0);
    CHECK(q.b(0) == 0.0);
    CHECK(q.Sigma(1, 1) > 0.0);
  }
  SUBCASE("study y values never touch coefficients of the same study's SPF") {
    const Quadratic q = cs_utility(lib, c, generalist_nu(2));
    auto st = c.studies();
    st[0].y.array() += 3.0;
    // Keep the library fixed; only the validation responses change.
    const StudyCollection c2(st);
    const Quadratic q2 = cs_utility(lib, c2, generalist_nu(2));
    CHECK(q2.Sigma == q.Sigma);
    CHECK(q2.b(0) == q.b(0));
    CHECK(q2.b(1) != q.b(1));
  }
  SUBCASE("three studies, generalist: Sigma matches the elimination formula") {
    auto c3 = random_collection({8, 9, 11}, 2, rs);
    const auto l3 = train_library(specs, c3, study_specific_lts(c3));
    const Quadratic q = cs_utility(l3, c3, generalist_nu(3));
    const Index K = 3;
    for (Index a = 0; a < K; ++a)
      for (Index b = 0; b < K; ++b) {
        double s = 0.0;
        for (Index i = 0; i < K; ++i) {
          if (i == a || i == b) continue;
          s += double(K) / (c3.n(i) * (K - 1.0) * (K - 1.0)) *
               predict(l3.spfs[a], c3[i].X).dot(predict(l3.spfs[b], c3[i].X));
        }
        CHECK(q.Sigma(a, b) == doctest::Approx(s).epsilon(1e-12));
      }
  }
  SUBCASE("a set spanning every study is rejected") {
    TrainingSetList pooled{{lts.sets[0]}};
    pooled.sets[0].insert(pooled.sets[0].end(), lts.sets[1].begin(), lts.sets[1].end());
    const auto lp = train_library(specs, c, pooled);
    CHECK_THROWS_WITH_AS(cs_utility(lp, c, generalist_nu(2)),
                         doctest::Contains("DegenerateScaling"), Error);
  }
}

TEST_CASE("self-nu objective matches its definition and gradient") {
  RandomStream rs(17, 0, 0, purpose::kMisc);
  const auto c = random_collection({10, 12, 9}, 2, rs);
  const auto lib = train_library({LearnerSpec::mean_only(), LearnerSpec::ols()}, c,
                                 study_specific_lts(c));
  const SelfNuObjective obj(lib, c);
  for (int r = 0; r < 10; ++r) {
    const Vec w = random_simplex(lib.J(), rs);
    Vec nu(3);
    for (Index k = 0; k < 3; ++k) nu(k) = w.segment(2 * k, 2).sum();
    CHECK(obj.value(w) == doctest::Approx(eliminate_direct(lib, c, nu, w)).epsilon(1e-10));
    // Directional derivatives along simplex edges e_j - e_0.
    const Vec g = obj.gradient(w);
    for (Index j = 1; j < lib.J(); ++j) {
      const double h = 1e-6;
      Vec wp = w, wm = w;
      wp(j) += h, wp(0) -= h;
      wm(j) -= h, wm(0) += h;
      CHECK(g(j) - g(0) ==
            doctest::Approx((obj.value(wp) - obj.value(wm)) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("self-nu value at a vertex is the limit along the best direction") {
  RandomStream rs(18, 0, 0, purpose::kMisc);
  const auto c = random_collection({10, 12, 9, 11}, 2, rs);
  const auto lib = train_library({LearnerSpec::ols()}, c, study_specific_lts(c));
  const SelfNuObjective obj(lib, c);
  for (Index k = 0; k < 4; ++k) {
    Vec dir;
    const double top = obj.vertex_value(k, &dir);
    CHECK(obj.value(Vec::Unit(4, k)) == top);
    const Vec toward = (1 - 1e-7) * Vec::Unit(4, k) + 1e-7 * dir;
    CHECK(std::abs(obj.value(toward) - top) < 1e-5);
    for (int r = 0; r < 20; ++r) {
      Vec u = random_simplex(4, rs);
      u(k) = 0.0;
      u /= u.sum();
      CHECK(obj.value((1 - 1e-7) * Vec::Unit(4, k) + 1e-7 * u) <= top + 1e-9);
    }
  }
}

TEST_CASE("cross-set scaling coefficients") {
  const TrainingSetList lts{{{{0, 0}}, {{0, 1}, {0, 2}}, {{1, 2}}}};
  const Vec nu = (Vec(3) << 0.2, 0.3, 0.5).finished();
  const Mat a = cs_scaling(lts, 3, nu);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(1, 0) == doctest::Approx(1 / 0.8));
  CHECK(a(0, 1) == doctest::Approx(1 / 0.2));
  CHECK(a(1, 1) == 0.0);
  CHECK(a(2, 1) == 0.0);
  CHECK(a(0, 2) == doctest::Approx(2.0));
}

TEST_CASE("unbiased Sigma_g estimator") {
  RandomStream rs(18, 0, 0, purpose::kMisc);
  const auto c = random_collection({6, 7, 8}, 2, rs);
  const std::vector<LearnerSpec> specs{LearnerSpec::ols(), LearnerSpec::mean_only()};
  const auto lib = train_library(specs, c, study_specific_lts(c));
  const Mat S = unbiased_sigma_g(lib, c, 0, 1);
  const Vec a = predict(lib.at(0, 0), c[2].X), b = predict(lib.at(1, 0), c[2].X);
  CHECK(S(0, 0) == doctest::Approx(a.dot(b) / 8).epsilon(1e-12));
  // Constant SPFs give the product of the constants.
  CHECK(S(1, 1) == doctest::Approx(lib.at(0, 1).coef(0) * lib.at(1, 1).coef(0)).epsilon(1e-12));
  const auto c2 = random_collection({6, 7}, 2, rs);
  CHECK_THROWS_WITH_AS(unbiased_sigma_g(train_library(specs, c2, study_specific_lts(c2)), c2, 0, 1),
                       doctest::Contains("InsufficientStudies"), Error);
}

TEST_CASE("unbiased Sigma_g is unbiased for the population inner product") {
  Scenario s;
  s.kind = ScenarioKind::Ex2;
  s.K = 3;
  s.n = {40};
  s.p = 3;
  s.seed = 2024;
  std::vector<double> diff;
  for (std::uint32_t r = 0; r < 2000; ++r) {
    s.replicate = r;
    const auto [c, truth] = generate(s);
    const auto lib = train_library({LearnerSpec::ols()}, c, study_specific_lts(c));
    diff.push_back(unbiased_sigma_g(lib, c, 0, 1)(0, 0) - lib.at(0, 0).coef.dot(lib.at(1, 0).coef));
  }
  double m = 0, v = 0;
  for (double d : diff) m += d;
  m /= diff.size();
  for (double d : diff) v += (d - m) * (d - m);
  const double se = std::sqrt(v / (diff.size() - 1) / diff.size());
  CHECK(std::abs(m) < 3 * se);
}

TEST_CASE("penalty") {
  RandomStream rs(19, 0, 0, purpose::kMisc);
  Mat A = Mat::NullaryExpr(3, 3, [&] { return rs.normal(); });
  const Quadratic q(A * A.transpose(), random_vec(3, rs), 2.0);
  const Vec anchor = random_simplex(3, rs);
  const Quadratic q0 = apply_penalty(q, 0.0, anchor);
  CHECK(q0.Sigma == q.Sigma);
  CHECK(q0.b == q.b);
  CHECK(q0.c == q.c);
  const Quadratic q1 = apply_penalty(q, 0.7, anchor);
  const Vec w = random_vec(3, rs);
  CHECK(q1(w) == doctest::Approx(q(w) - 0.7 * (w - anchor).squaredNorm()).epsilon(1e-12));
  CHECK_THROWS_AS(apply_penalty(q, -1.0, anchor), Error);
  // Unconstrained maximizers move toward the anchor as lambda grows.
  double prev = 1e300;
  for (double lam : {0.0, 0.1, 1.0, 10.0, 100.0}) {
    const Quadratic ql = apply_penalty(q, lam, anchor);
    const Vec wl = ql.Sigma.ldlt().solve(ql.b);
    const double d = (wl - anchor).norm();
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
}

TEST_CASE("Example-1 penalized specialist weight") {
  const auto c = ex1_collection(1.1, -0.6, 6);
  const auto lib = train_library({LearnerSpec::mean_only()}, c, study_specific_lts(c));
  const double y1 = c[0].y.mean(), y2 = c[1].y.mean();
  for (double lam : {0.05, 0.5, 3.0}) {
    const Quadratic q = apply_penalty(dr_utility(lib, c, specialist_nu(2, 0)), lam,
                                      Vec(Vec::Constant(2, 0.5)));
    const auto rep = maximize(q, FeasibleSet::simplex());
    CHECK(rep.w(0) ==
          doctest::Approx(1 - lam / ((y1 - y2) * (y1 - y2) + 2 * lam)).epsilon(1e-9));
  }
  const Quadratic big = apply_penalty(dr_utility(lib, c, specialist_nu(2, 0)), 1e8,
                                      Vec((Vec(2) << 0.3, 0.7).finished()));
  CHECK((maximize(big, FeasibleSet::simplex()).w - Vec((Vec(2) << 0.3, 0.7).finished())).norm() <
        1e-3);
}
