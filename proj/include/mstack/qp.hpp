#pragma once

#include "mstack/data_model.hpp"
#include "mstack/utility.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace mstack {

template <typename Scalar>
struct SolveReport {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w;
  Scalar objective = Scalar(0);
  Index iterations = 0;
  bool converged = false;
  Scalar kkt_residual = Scalar(0);
};

struct SolveOptions {
  double tol = 1e-9;
  Index max_iter = 50000;
  // Start here instead of the uniform point (lambda paths).
  std::optional<Vec> warm_start;
  // Skip the eigenvalue check when Sigma is known to be PSD.
  bool assume_psd = false;
  bool multistart = true;
};

// Euclidean projection onto the probability simplex (sort-based).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project_simplex(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Index d = v.size();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> vv = v;
  std::vector<Scalar> u(vv.data(), vv.data() + d);
  std::sort(u.begin(), u.end(), std::greater<Scalar>());
  Scalar cum = Scalar(0), theta = Scalar(0);
  for (Index j = 0; j < d; ++j) {
    cum += u[j];
    const Scalar t = (cum - Scalar(1)) / Scalar(j + 1);
    if (u[j] - t > Scalar(0)) theta = t;
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = (vv.array() - theta).max(Scalar(0)).matrix();
  return w;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project(
    const Eigen::MatrixBase<Derived>& v, const FeasibleSet& W) {
  using Scalar = typename Derived::Scalar;
  switch (W.kind) {
    case FeasibleSet::Kind::Simplex: return project_simplex(v);
    case FeasibleSet::Kind::Box:
      return v.array().max(Scalar(W.lower)).min(Scalar(W.upper)).matrix();
    case FeasibleSet::Kind::Free: break;
  }
  return v;
}

// Natural residual ||w - P_W(w - g)||_inf with g = Sigma w - b.
template <typename Scalar>
Scalar kkt_residual(const UtilityQuadratic<Scalar>& q, const FeasibleSet& W,
                    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& w) {
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g = q.Sigma * w - q.b;
  if (W.kind == FeasibleSet::Kind::Free) return g.cwiseAbs().maxCoeff();
  return (w - project(w - g, W)).cwiseAbs().maxCoeff();
}

namespace detail {

template <typename Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Minimization form f(w) = w'Sw - 2b'w.
template <typename Scalar>
Scalar min_objective(const UtilityQuadratic<Scalar>& q, const VecT<Scalar>& w) {
  return w.dot(q.Sigma * w) - Scalar(2) * q.b.dot(w);
}

template <typename Scalar>
Scalar power_lipschitz(const MatT<Scalar>& S) {
  const Index d = S.rows();
  VecT<Scalar> v(d);
  for (Index i = 0; i < d; ++i) v(i) = Scalar(1) + Scalar(i + 1) / Scalar(7 * d);
  v.normalize();
  Scalar lam = Scalar(0);
  for (int it = 0; it < 30; ++it) {
    VecT<Scalar> Sv = S * v;
    const Scalar nrm = Sv.norm();
    if (!(nrm > Scalar(0))) return Scalar(0);
    lam = nrm;
    v = Sv / nrm;
  }
  return lam;
}

// Accelerated projected gradient with restart. Returns iterations used.
template <typename Scalar>
Index projected_gradient(const UtilityQuadratic<Scalar>& q, const FeasibleSet& W,
                         VecT<Scalar>& x, Scalar& Lip, Index iters, Scalar tol) {
  VecT<Scalar> y = x, xn;
  Scalar t = Scalar(1);
  Scalar fx = min_objective(q, x);
  Index it = 0;
  for (; it < iters; ++it) {
    const Scalar step = Scalar(1) / Lip;
    xn = project(VecT<Scalar>(y - step * (q.Sigma * y - q.b)), W);
    Scalar fn = min_objective(q, xn);
    if (fn > fx) {
      // Non-monotone: drop momentum and take a plain step, shrinking it if needed.
      y = x;
      t = Scalar(1);
      for (int s = 0; s < 60; ++s) {
        xn = project(VecT<Scalar>(x - (Scalar(1) / Lip) * (q.Sigma * x - q.b)), W);
        fn = min_objective(q, xn);
        if (fn <= fx) break;
        Lip *= Scalar(2);
      }
      if (fn > fx) break;
    }
    const Scalar tn = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * t * t)) / Scalar(2);
    y = xn + ((t - Scalar(1)) / tn) * (xn - x);
    x = xn;
    fx = fn;
    t = tn;
    if (it % 10 == 9 && kkt_residual(q, W, x) < tol) return it + 1;
  }
  return it;
}

template <typename Scalar>
bool eqp_step(const MatT<Scalar>& K, const VecT<Scalar>& rhs, VecT<Scalar>& sol) {
  Eigen::CompleteOrthogonalDecomposition<MatT<Scalar>> cod(K);
  sol = cod.solve(rhs);
  const Scalar scale = Scalar(1) + rhs.cwiseAbs().maxCoeff() +
                       K.cwiseAbs().maxCoeff() * sol.cwiseAbs().maxCoeff();
  return (K * sol - rhs).cwiseAbs().maxCoeff() <= Scalar(1e-10) * scale && sol.allFinite();
}

// Primal active-set refinement on the simplex from a feasible point.
template <typename Scalar>
bool active_set_simplex(const UtilityQuadratic<Scalar>& q, VecT<Scalar>& w, Index max_iter,
                        Index& used) {
  const Index d = w.size();
  std::vector<char> freev(d);
  for (Index i = 0; i < d; ++i) freev[i] = w(i) > Scalar(0);
  const Scalar gscale = Scalar(1) + q.Sigma.cwiseAbs().maxCoeff() + q.b.cwiseAbs().maxCoeff();
  for (Index it = 0; it < max_iter; ++it) {
    ++used;
    std::vector<Index> F;
    for (Index i = 0; i < d; ++i)
      if (freev[i]) F.push_back(i);
    const Index nf = static_cast<Index>(F.size());
    if (nf == 0) return false;
    const VecT<Scalar> g = q.Sigma * w - q.b;
    MatT<Scalar> K = MatT<Scalar>::Zero(nf + 1, nf + 1);
    VecT<Scalar> rhs = VecT<Scalar>::Zero(nf + 1);
    for (Index a = 0; a < nf; ++a) {
      for (Index c = 0; c < nf; ++c) K(a, c) = q.Sigma(F[a], F[c]);
      K(a, nf) = K(nf, a) = Scalar(1);
      rhs(a) = -g(F[a]);
    }
    VecT<Scalar> sol;
    if (!eqp_step(K, rhs, sol)) return false;
    Scalar alpha = Scalar(1);
    Index block = -1;
    for (Index a = 0; a < nf; ++a) {
      if (sol(a) < Scalar(0)) {
        const Scalar r = -w(F[a]) / sol(a);
        if (r < alpha) {
          alpha = r;
          block = F[a];
        }
      }
    }
    for (Index a = 0; a < nf; ++a) w(F[a]) += alpha * sol(a);
    if (block >= 0) {
      w(block) = Scalar(0);
      freev[block] = 0;
      w /= w.sum();
      continue;
    }
    w = w.cwiseMax(Scalar(0));
    w /= w.sum();
    const VecT<Scalar> g2 = q.Sigma * w - q.b;
    Scalar mu = Scalar(0);
    for (Index i : F) mu += g2(i);
    mu /= Scalar(nf);
    Index enter = -1;
    Scalar worst = -Scalar(1e-13) * gscale;
    for (Index i = 0; i < d; ++i) {
      if (freev[i]) continue;
      const Scalar s = g2(i) - mu;
      if (s < worst) {
        worst = s;
        enter = i;
      }
    }
    if (enter < 0) return true;
    freev[enter] = 1;
  }
  return false;
}

template <typename Scalar>
bool active_set_box(const UtilityQuadratic<Scalar>& q, const FeasibleSet& W, VecT<Scalar>& w,
                    Index max_iter, Index& used) {
  const Index d = w.size();
  const Scalar lo = Scalar(W.lower), hi = Scalar(W.upper);
  // 0 free, -1 at lower, +1 at upper
  std::vector<int> state(d);
  for (Index i = 0; i < d; ++i) state[i] = w(i) <= lo ? -1 : (w(i) >= hi ? 1 : 0);
  if (lo == hi) {
    w.setConstant(lo);
    return true;
  }
  const Scalar gscale = Scalar(1) + q.Sigma.cwiseAbs().maxCoeff() + q.b.cwiseAbs().maxCoeff();
  for (Index it = 0; it < max_iter; ++it) {
    ++used;
    std::vector<Index> F;
    for (Index i = 0; i < d; ++i)
      if (state[i] == 0) F.push_back(i);
    const Index nf = static_cast<Index>(F.size());
    const VecT<Scalar> g = q.Sigma * w - q.b;
    if (nf > 0) {
      MatT<Scalar> K(nf, nf);
      VecT<Scalar> rhs(nf);
      for (Index a = 0; a < nf; ++a) {
        for (Index c = 0; c < nf; ++c) K(a, c) = q.Sigma(F[a], F[c]);
        rhs(a) = -g(F[a]);
      }
      VecT<Scalar> sol;
      if (!eqp_step(K, rhs, sol)) return false;
      Scalar alpha = Scalar(1);
      Index block = -1;
      int side = 0;
      for (Index a = 0; a < nf; ++a) {
        const Index i = F[a];
        if (sol(a) < Scalar(0)) {
          const Scalar r = (lo - w(i)) / sol(a);
          if (r < alpha) alpha = r, block = i, side = -1;
        } else if (sol(a) > Scalar(0)) {
          const Scalar r = (hi - w(i)) / sol(a);
          if (r < alpha) alpha = r, block = i, side = 1;
        }
      }
      for (Index a = 0; a < nf; ++a) w(F[a]) += alpha * sol(a);
      if (block >= 0) {
        w(block) = side < 0 ? lo : hi;
        state[block] = side;
        continue;
      }
    }
    w = w.cwiseMax(lo).cwiseMin(hi);
    const VecT<Scalar> g2 = q.Sigma * w - q.b;
    Index enter = -1;
    Scalar worst = Scalar(1e-13) * gscale;
    for (Index i = 0; i < d; ++i) {
      if (state[i] == 0) continue;
      // Lower-bound multiplier is g_i, upper is -g_i; both must be nonnegative.
      const Scalar viol = state[i] < 0 ? -g2(i) : g2(i);
      if (viol > worst) {
        worst = viol;
        enter = i;
      }
    }
    if (enter < 0) return true;
    state[enter] = 0;
  }
  return false;
}

template <typename Scalar>
SolveReport<Scalar> solve_from(const UtilityQuadratic<Scalar>& q, const FeasibleSet& W,
                               VecT<Scalar> x, const SolveOptions& opt, Scalar Lip,
                               bool try_polish_first) {
  const Scalar tol = Scalar(opt.tol);
  SolveReport<Scalar> rep;
  x = project(x, W);
  Index used = 0;
  const Index as_cap = 5 * x.size() + 50;
  if (try_polish_first) {
    VecT<Scalar> z = x;
    Index u = 0;
    bool ok = W.kind == FeasibleSet::Kind::Simplex ? active_set_simplex(q, z, as_cap, u)
                                                   : active_set_box(q, W, z, as_cap, u);
    used += u;
    if (ok && kkt_residual(q, W, z) < tol) {
      rep.w = z;
      rep.iterations = used;
      rep.kkt_residual = kkt_residual(q, W, z);
      rep.converged = true;
      rep.objective = q(z);
      return rep;
    }
  }
  Index chunk = 100;
  while (used < opt.max_iter) {
    const Index n = std::min(chunk, opt.max_iter - used);
    used += projected_gradient(q, W, x, Lip, n, tol);
    if (kkt_residual(q, W, x) < tol) break;
    VecT<Scalar> z = x;
    Index u = 0;
    bool ok = W.kind == FeasibleSet::Kind::Simplex ? active_set_simplex(q, z, as_cap, u)
                                                   : active_set_box(q, W, z, as_cap, u);
    used += u;
    if (ok && kkt_residual(q, W, z) < tol &&
        min_objective(q, z) <= min_objective(q, x) + Scalar(1e-12) * (Scalar(1) + std::abs(min_objective(q, x)))) {
      x = z;
      break;
    }
    chunk *= 2;
  }
  rep.w = x;
  rep.iterations = used;
  rep.kkt_residual = kkt_residual(q, W, x);
  rep.converged = rep.kkt_residual < tol;
  rep.objective = q(x);
  return rep;
}

}  // namespace detail

// Maximizes the utility over W. Iterations start at the uniform point (or the
// warm start), so among several maximizers the one reached from uniform is returned.
template <typename Scalar>
SolveReport<Scalar> maximize(const UtilityQuadratic<Scalar>& q, const FeasibleSet& W,
                             const SolveOptions& opt = {}) {
  using VecS = detail::VecT<Scalar>;
  using MatS = detail::MatT<Scalar>;
  if (!(opt.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
  const Index d = q.dim();
  if (d == 0 || q.Sigma.rows() != d || q.Sigma.cols() != d)
    throw Error(ErrorCode::ShapeMismatch, "quadratic dimensions are inconsistent");
  if (!q.Sigma.allFinite() || !q.b.allFinite() || !std::isfinite(static_cast<double>(q.c)))
    throw Error(ErrorCode::NonFiniteObjective, "quadratic has non-finite entries");

  if (W.kind == FeasibleSet::Kind::Free) {
    SolveReport<Scalar> rep;
    Eigen::CompleteOrthogonalDecomposition<MatS> cod(q.Sigma);
    rep.w = cod.solve(q.b);
    rep.iterations = 1;
    rep.kkt_residual = (q.Sigma * rep.w - q.b).cwiseAbs().maxCoeff();
    rep.converged = rep.kkt_residual < Scalar(opt.tol) * (Scalar(1) + q.b.cwiseAbs().maxCoeff());
    rep.objective = q(rep.w);
    return rep;
  }

  VecS start;
  if (opt.warm_start) {
    if (opt.warm_start->size() != d)
      throw Error(ErrorCode::ShapeMismatch, "warm start has the wrong length");
    start = opt.warm_start->template cast<Scalar>();
  } else if (W.kind == FeasibleSet::Kind::Simplex) {
    start = VecS::Constant(d, Scalar(1) / Scalar(d));
  } else {
    start = VecS::Constant(d, (Scalar(W.lower) + Scalar(W.upper)) / Scalar(2));
  }

  bool indefinite = false;
  if (!opt.assume_psd) {
    Eigen::SelfAdjointEigenSolver<MatS> es(q.Sigma, Eigen::EigenvaluesOnly);
    const Scalar lmin = es.eigenvalues()(0), lmax = es.eigenvalues()(d - 1);
    indefinite = lmin < -Scalar(1e-12) * std::max(Scalar(1), std::abs(lmax));
  }
  Scalar Lip = detail::power_lipschitz<Scalar>(q.Sigma);
  if (!(Lip > Scalar(0))) Lip = Scalar(1);

  SolveReport<Scalar> best =
      detail::solve_from(q, W, start, opt, Lip, opt.warm_start.has_value());
  if (indefinite && opt.multistart) {
    std::vector<VecS> starts;
    if (opt.warm_start) starts.push_back(VecS::Constant(d, Scalar(1) / Scalar(d)));
    if (W.kind == FeasibleSet::Kind::Simplex) {
      for (Index i = 0; i < d; ++i) starts.push_back(VecS::Unit(d, i));
    } else if (d <= 10) {
      for (Index mask = 0; mask < (Index(1) << d); ++mask) {
        VecS v(d);
        for (Index i = 0; i < d; ++i) v(i) = (mask >> i) & 1 ? Scalar(W.upper) : Scalar(W.lower);
        starts.push_back(v);
      }
    }
    Index total = best.iterations;
    for (const auto& s : starts) {
      auto r = detail::solve_from(q, W, s, opt, Lip, false);
      total += r.iterations;
      const Scalar margin = Scalar(1e-12) * (Scalar(1) + std::abs(best.objective));
      if ((r.converged && !best.converged) ||
          (r.converged == best.converged && r.objective > best.objective + margin))
        best = r;
    }
    best.iterations = total;
  }
  if (!std::isfinite(static_cast<double>(best.objective)))
    throw Error(ErrorCode::NonFiniteObjective, "objective is not finite at the solution");
  return best;
}

// Projected gradient with Armijo backtracking for a smooth utility over W.
template <typename F, typename G>
SolveReport<double> maximize_smooth(F value, G gradient, Index d, const FeasibleSet& W,
                                    const SolveOptions& opt = {}) {
  Vec w = opt.warm_start ? *opt.warm_start
                         : (W.kind == FeasibleSet::Kind::Simplex
                                ? Vec::Constant(d, 1.0 / static_cast<double>(d))
                                : Vec::Constant(d, W.kind == FeasibleSet::Kind::Box
                                                       ? (W.lower + W.upper) / 2.0
                                                       : 0.0));
  w = project(w, W);
  double fw = value(w), step = 1.0;
  SolveReport<double> rep;
  auto residual = [&](const Vec& x, const Vec& g) {
    // g is the ascent direction; the natural residual of the minimization form.
    return (x - project(Vec(x + g), W)).cwiseAbs().maxCoeff();
  };
  Index it = 0;
  Vec g = gradient(w);
  for (; it < opt.max_iter; ++it) {
    if (residual(w, g) < opt.tol) break;
    bool moved = false;
    for (int bt = 0; bt < 80; ++bt) {
      Vec wn = project(Vec(w + step * g), W);
      const double fn = value(wn);
      if (fn >= fw + 1e-4 * g.dot(wn - w)) {
        moved = (wn - w).cwiseAbs().maxCoeff() > 0.0;
        w = wn;
        fw = fn;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    g = gradient(w);
    if (!moved) break;
  }
  rep.w = w;
  rep.objective = fw;
  rep.iterations = it;
  rep.kkt_residual = residual(w, g);
  rep.converged = rep.kkt_residual < opt.tol;
  if (!std::isfinite(fw)) throw Error(ErrorCode::NonFiniteObjective, "objective not finite");
  return rep;
}

// Exhaustive search over the simplex lattice {w : w_i = m_i / (res - 1)}.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>, Scalar> grid_oracle(
    const UtilityQuadratic<Scalar>& q, Index resolution) {
  const Index d = q.dim();
  if (d > 4) throw Error(ErrorCode::DimensionTooLarge, "grid oracle supports d <= 4");
  if (d < 1 || resolution < 2) throw Error(ErrorCode::InvalidArgument, "bad grid size");
  const Index N = resolution - 1;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w(d), best(d);
  Scalar bestv = -std::numeric_limits<Scalar>::infinity();
  std::vector<Index> m(d, 0);
  std::function<void(Index, Index)> rec = [&](Index pos, Index left) {
    if (pos == d - 1) {
      m[pos] = left;
      for (Index i = 0; i < d; ++i) w(i) = Scalar(m[i]) / Scalar(N);
      const Scalar v = q(w);
      if (v > bestv) bestv = v, best = w;
      return;
    }
    for (Index a = 0; a <= left; ++a) {
      m[pos] = a;
      rec(pos + 1, left - a);
    }
  };
  rec(0, N);
  return {best, bestv};
}

}  // namespace mstack
