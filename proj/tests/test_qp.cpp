#include "helpers.hpp"
#include "mstack/qp.hpp"

#include <doctest.h>

using namespace mstack;
using namespace mstack::testing;

namespace {

// Projection onto the simplex by enumerating supports.
Vec project_by_enumeration(const Vec& v) {
  const Index d = v.size();
  Vec best;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index mask = 1; mask < (Index(1) << d); ++mask) {
    double sum = 0.0;
    Index cnt = 0;
    for (Index i = 0; i < d; ++i)
      if (mask >> i & 1) sum += v(i), ++cnt;
    const double theta = (sum - 1.0) / cnt;
    Vec w = Vec::Zero(d);
    bool ok = true;
    for (Index i = 0; i < d; ++i)
      if (mask >> i & 1) {
        w(i) = v(i) - theta;
        ok &= w(i) >= 0.0;
      }
    if (!ok) continue;
    const double dist = (w - v).squaredNorm();
    if (dist < best_d) best_d = dist, best = w;
  }
  return best;
}

Quadratic random_psd(Index d, RandomStream& rs) {
  const Mat A = Mat::NullaryExpr(d, d + 1, [&] { return rs.normal(); }) / std::sqrt(d + 1.0);
  return Quadratic(A * A.transpose(), random_vec(d, rs), 1.0);
}

}  // namespace

TEST_CASE("simplex projection") {
  const Vec in = (Vec(3) << 0.2, 0.3, 0.5).finished();
  CHECK((project_simplex(in) - in).norm() < 1e-15);
  CHECK(project_simplex(Vec((Vec(2) << 10, 0).finished())) == Vec((Vec(2) << 1, 0).finished()));
  RandomStream rs(21, 0, 0, purpose::kMisc);
  for (int r = 0; r < 200; ++r) {
    const Vec v = random_vec(5, rs, 1.5);
    const Vec p = project_simplex(v);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((p - project_by_enumeration(v)).lpNorm<Eigen::Infinity>() < 1e-12);
    const Vec u = random_vec(5, rs, 1.5);
    CHECK((project_simplex(u) - p).norm() <= (u - v).norm() + 1e-12);
  }
}

TEST_CASE("maximize agrees with the lattice oracle on PSD instances") {
  RandomStream rs(22, 0, 0, purpose::kMisc);
  for (int r = 0; r < 24; ++r) {
    const Index d = 2 + r % 2;
    const Quadratic q = random_psd(d, rs);
    const auto rep = maximize(q, FeasibleSet::simplex());
    REQUIRE(rep.converged);
    CHECK(rep.kkt_residual < 1e-9);
    CHECK(rep.w.minCoeff() >= -1e-12);
    CHECK(std::abs(rep.w.sum() - 1.0) < 1e-10);
    const auto [wg, vg] = grid_oracle(q, d == 2 ? 10001 : 1501);
    CHECK(rep.objective >= vg - 1e-12);
    CHECK(rep.objective - vg < 1e-5 * (1 + std::abs(vg)));
    // Argmax is invariant to positive scaling.
    Quadratic q3 = q;
    q3 *= 3.0;
    CHECK((maximize(q3, FeasibleSet::simplex()).w - rep.w).norm() < 1e-7);
  }
}

TEST_CASE("simplex KKT conditions hold at the solution") {
  RandomStream rs(23, 0, 0, purpose::kMisc);
  for (int r = 0; r < 30; ++r) {
    const Quadratic q = random_psd(4, rs);
    const auto rep = maximize(q, FeasibleSet::simplex());
    const Vec g = q.Sigma * rep.w - q.b;
    // Sigma w - b = mu 1 + s with s >= 0 and s'w = 0.
    double mu = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < 4; ++i)
      if (rep.w(i) > 1e-8) mu = std::min(mu, g(i));
    const Vec s = g - Vec::Constant(4, mu);
    CHECK(s.minCoeff() > -1e-8);
    CHECK(std::abs(s.dot(rep.w)) < 1e-8);
  }
}

TEST_CASE("indefinite instances: multistart finds the lattice optimum") {
  RandomStream rs(24, 0, 0, purpose::kMisc);
  for (int r = 0; r < 40; ++r) {
    Mat A = Mat::NullaryExpr(3, 3, [&] { return rs.normal(); });
    const Quadratic q(A + A.transpose(), random_vec(3, rs), 0.0);
    const auto rep = maximize(q, FeasibleSet::simplex());
    const auto [wg, vg] = grid_oracle(q, 401);
    CHECK(rep.objective >= vg - 1e-9);
  }
}

TEST_CASE("box and free feasible sets") {
  RandomStream rs(25, 0, 0, purpose::kMisc);
  for (int r = 0; r < 20; ++r) {
    const Quadratic q = random_psd(3, rs);
    const auto box = maximize(q, FeasibleSet::box(0.0, 1.0));
    CHECK(box.converged);
    CHECK(box.w.minCoeff() >= -1e-12);
    CHECK(box.w.maxCoeff() <= 1 + 1e-12);
    // Compare with a fine lattice over the cube.
    double best = -1e300;
    for (int a = 0; a <= 60; ++a)
      for (int b = 0; b <= 60; ++b)
        for (int c = 0; c <= 60; ++c)
          best = std::max(best, q((Vec(3) << a / 60.0, b / 60.0, c / 60.0).finished()));
    CHECK(box.objective >= best - 1e-12);
    const auto fr = maximize(q, FeasibleSet::free());
    CHECK((q.Sigma * fr.w - q.b).lpNorm<Eigen::Infinity>() <
          1e-8 * (1 + q.b.lpNorm<Eigen::Infinity>()));
  }
  // Singular Sigma: minimum-norm least-squares solution.
  const Quadratic sing((Mat(2, 2) << 1, 1, 1, 1).finished(), Vec::Ones(2), 0.0);
  CHECK((maximize(sing, FeasibleSet::free()).w - Vec::Constant(2, 0.5)).norm() < 1e-12);
}

TEST_CASE("linear objectives select a vertex; ties return the uniform point") {
  const Quadratic lin(Mat::Zero(2, 2), (Vec(2) << 0.3, 1.0).finished(), 0.0);
  CHECK((maximize(lin, FeasibleSet::simplex()).w - Vec((Vec(2) << 0, 1).finished())).norm() <
        1e-9);
  CHECK((grid_oracle(lin, 11).first - Vec((Vec(2) << 0, 1).finished())).norm() == 0.0);
  const Quadratic flat(Mat::Ones(2, 2), Vec::Ones(2), 0.0);
  CHECK((maximize(flat, FeasibleSet::simplex()).w - Vec::Constant(2, 0.5)).norm() < 1e-12);
}

TEST_CASE("Example-1 quadratics") {
  const double y1 = 0.9, y2 = -1.6;
  Mat S(2, 2);
  S << y1 * y1, y1 * y2, y1 * y2, y2 * y2;
  const double yy = (y1 + y2) / 2;
  const auto gen = maximize(Quadratic(S, (Vec(2) << y1 * yy, y2 * yy).finished(), 0.0),
                            FeasibleSet::simplex());
  CHECK((gen.w - Vec::Constant(2, 0.5)).norm() < 1e-9);
  const auto spec =
      maximize(Quadratic(S, (Vec(2) << y1 * y1, y2 * y1).finished(), 0.0), FeasibleSet::simplex());
  CHECK((spec.w - Vec((Vec(2) << 1, 0).finished())).norm() < 1e-9);
  // Cross-set CV: -(2 w1^2 y1^2 + 2 w2^2 y2^2) + const on the simplex.
  const Quadratic cs((Vec(2) << 2 * y1 * y1, 2 * y2 * y2).finished().asDiagonal(), Vec::Zero(2),
                     0.0);
  const Vec expect = (Vec(2) << y2 * y2, y1 * y1).finished() / (y1 * y1 + y2 * y2);
  CHECK((maximize(cs, FeasibleSet::simplex()).w - expect).norm() < 1e-9);
  CHECK((grid_oracle(cs, 10001).first - expect).norm() < 1e-3);
}

TEST_CASE("solver errors") {
  CHECK_THROWS_WITH_AS(grid_oracle(Quadratic(Mat::Identity(5, 5), Vec::Zero(5), 0.0), 5),
                       doctest::Contains("DimensionTooLarge"), Error);
  Quadratic bad(Mat::Identity(2, 2), Vec::Zero(2), 0.0);
  bad.b(0) = std::nan("");
  CHECK_THROWS_WITH_AS(maximize(bad, FeasibleSet::simplex()),
                       doctest::Contains("NonFiniteObjective"), Error);
  SolveOptions none;
  none.max_iter = 0;
  const auto rep = maximize(Quadratic(Mat::Identity(3, 3), Vec::Unit(3, 0), 0.0),
                            FeasibleSet::simplex(), none);
  CHECK_FALSE(rep.converged);
}

TEST_CASE("templated on scalar: long double solve matches double") {
  RandomStream rs(26, 0, 0, purpose::kMisc);
  const Quadratic q = random_psd(3, rs);
  const auto qd = maximize(q, FeasibleSet::simplex());
  const auto ql = maximize(q.cast<long double>(), FeasibleSet::simplex());
  CHECK((ql.w.cast<double>() - qd.w).norm() < 1e-8);
}
