#include "mstack/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mstack {

std::string to_string(Method m) {
  switch (m) {
    case Method::DR: return "dr";
    case Method::CVws: return "cvws";
    case Method::CVcs: return "cvcs";
  }
  return "?";
}

std::string to_string(CsMode m) {
  switch (m) {
    case CsMode::FixedNu: return "fixed-nu";
    case CsMode::SelfNu: return "self-nu";
    case CsMode::UniformElim: return "uniform-elim";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  if (s == "dr") return Method::DR;
  if (s == "cvws") return Method::CVws;
  if (s == "cvcs") return Method::CVcs;
  throw Error(ErrorCode::ConfigError, "--method: unknown method '" + s + "'");
}

CsMode parse_cs_mode(const std::string& s) {
  if (s == "fixed-nu") return CsMode::FixedNu;
  if (s == "self-nu") return CsMode::SelfNu;
  if (s == "uniform-elim") return CsMode::UniformElim;
  throw Error(ErrorCode::ConfigError, "--cs-mode: unknown mode '" + s + "'");
}

TrainingSetList resolve_lts(const LtsDescriptor& d, const StudyCollection& c) {
  switch (d.kind) {
    case LtsDescriptor::Kind::StudySpecific: return study_specific_lts(c);
    case LtsDescriptor::Kind::Pooled: {
      TrainingSetList lts;
      lts.sets.emplace_back();
      for (Index k = 0; k < c.K(); ++k)
        for (Index i = 0; i < c.n(k); ++i) lts.sets[0].push_back({i, k});
      return lts;
    }
    case LtsDescriptor::Kind::Explicit:
      validate_lts(d.sets, c);
      return d.sets;
  }
  return {};
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g(25);
  for (int a = 0; a < 25; ++a) g[a] = std::pow(10.0, -3.0 + 6.0 * a / 24.0);
  return g;
}

void validate_config(const StackConfig& cfg, const StudyCollection& c) {
  if (cfg.learners.empty()) throw Error(ErrorCode::ConfigError, "--learner: none given");
  if (cfg.task.specialist && (cfg.task.k < 0 || cfg.task.k >= c.K()))
    throw Error(ErrorCode::ConfigError,
                "--task: study index " + std::to_string(cfg.task.k + 1) + " out of range");
  if (cfg.method == Method::CVws && cfg.folds < 2)
    throw Error(ErrorCode::ConfigError, "--folds: need at least 2");
  if (cfg.method == Method::CVws && cfg.repeats < 1)
    throw Error(ErrorCode::ConfigError, "--repeats: need at least 1");
  if (cfg.lambda.kind == LambdaChoice::Kind::Fixed && !(cfg.lambda.value >= 0.0))
    throw Error(ErrorCode::ConfigError, "--lambda: must be >= 0");
  if (cfg.lambda.kind == LambdaChoice::Kind::Auto) {
    if (!cfg.task.specialist)
      throw Error(ErrorCode::ConfigError, "--lambda auto needs a specialist task");
    for (double l : cfg.lambda.grid)
      if (!(l >= 0.0)) throw Error(ErrorCode::ConfigError, "--lambda grid values must be >= 0");
  }
  if (cfg.method == Method::CVcs && cfg.cs_mode == CsMode::SelfNu &&
      cfg.feasible.kind != FeasibleSet::Kind::Simplex)
    throw Error(ErrorCode::ConfigError, "--cs-mode self-nu requires --constraint simplex");
  if (cfg.nu) validate_nu(*cfg.nu, c.K());
}

Vec target_nu(const StackConfig& cfg, Index K) {
  if (cfg.nu) return *cfg.nu;
  if (cfg.method == Method::CVcs && cfg.cs_mode == CsMode::UniformElim) return generalist_nu(K);
  return cfg.task.specialist ? specialist_nu(K, cfg.task.k) : generalist_nu(K);
}

Quadratic build_quadratic(const StackConfig& cfg, const StudyCollection& c,
                          const SpfLibrary& lib) {
  const Vec nu = target_nu(cfg, c.K());
  switch (cfg.method) {
    case Method::DR: return dr_utility(lib, c, nu);
    case Method::CVws: {
      const WsPartition part = cfg.ws_full_copy
                                   ? full_copy_partition(c, cfg.folds)
                                   : make_ws_partition(c, cfg.folds, cfg.repeats, cfg.seed);
      return ws_utility(cfg.learners, c, lib.lts, nu, part);
    }
    case Method::CVcs:
      if (cfg.cs_mode == CsMode::SelfNu)
        throw Error(ErrorCode::InvalidArgument, "self-nu utility is not quadratic");
      return cs_utility(lib, c, nu);
  }
  return {};
}

Vec generalist_anchor(const StackConfig& cfg, const StudyCollection& c, const SpfLibrary& lib) {
  SolveOptions opt = cfg.solver;
  opt.assume_psd = true;
  opt.warm_start.reset();
  return maximize(dr_utility(lib, c, generalist_nu(c.K())), cfg.feasible, opt).w;
}

namespace {

SolveReport<double> solve_self_nu(const StackConfig& cfg, const StudyCollection& c,
                                  const SpfLibrary& lib, double lambda, const Vec& anchor) {
  const SelfNuObjective obj(lib, c);
  auto value = [&](const Vec& w) {
    double v = obj.value(w);
    if (lambda > 0.0) v -= lambda * (w - anchor).squaredNorm();
    return v;
  };
  auto grad = [&](const Vec& w) {
    Vec g = obj.gradient(w);
    if (lambda > 0.0) g -= 2.0 * lambda * (w - anchor);
    return g;
  };
  auto rep = maximize_smooth(value, grad, lib.J(), cfg.feasible, cfg.solver);
  // The supremum may sit on a vertex nu_k = 1, which the ascent only approaches.
  const Index L = obj.block();
  for (Index k = 0; k < c.K(); ++k) {
    Vec w = Vec::Zero(lib.J());
    w.segment(k * L, L) = lambda > 0.0 ? project_simplex(Vec(anchor.segment(k * L, L)))
                                       : Vec::Constant(L, 1.0 / static_cast<double>(L));
    const double v = value(w);
    const double margin = 1e-9 * (1.0 + std::abs(rep.objective));
    if (v > rep.objective + margin || (!rep.converged && v >= rep.objective - margin)) {
      rep.w = w;
      rep.objective = v;
      rep.converged = true;
      rep.kkt_residual = 0.0;
    }
  }
  return rep;
}

bool is_self_nu(const StackConfig& cfg) {
  return cfg.method == Method::CVcs && cfg.cs_mode == CsMode::SelfNu;
}

}  // namespace

StackedModel fit_library(const StackConfig& cfg, const StudyCollection& c, SpfLibrary lib) {
  validate_config(cfg, c);
  StackedModel model;
  model.config = cfg;
  const bool penalized = cfg.lambda.kind != LambdaChoice::Kind::None;
  double lambda = 0.0;
  if (penalized) {
    model.anchor = cfg.anchor ? *cfg.anchor : generalist_anchor(cfg, c, lib);
    if (model.anchor.size() != lib.J())
      throw Error(ErrorCode::ConfigError, "penalty anchor length differs from library size");
    if (cfg.lambda.kind == LambdaChoice::Kind::Fixed) {
      lambda = cfg.lambda.value;
    } else {
      const auto grid = cfg.lambda.grid.empty() ? default_lambda_grid() : cfg.lambda.grid;
      model.selection = select_lambda_loo(cfg, c, cfg.task.k, grid, cfg.lambda.refine);
      lambda = model.selection->lambda;
    }
    model.lambda = lambda;
  }
  if (is_self_nu(cfg)) {
    model.report = solve_self_nu(cfg, c, lib, lambda, model.anchor);
  } else {
    Quadratic q = build_quadratic(cfg, c, lib);
    if (penalized) q = apply_penalty(q, lambda, model.anchor);
    SolveOptions opt = cfg.solver;
    opt.assume_psd = opt.assume_psd || cfg.method != Method::CVcs;
    model.report = maximize(q, cfg.feasible, opt);
  }
  model.weights = model.report.w;
  model.library = std::move(lib);
  return model;
}

StackedModel fit(const StackConfig& cfg, const StudyCollection& c) {
  validate_config(cfg, c);
  const TrainingSetList lts = resolve_lts(cfg.lts, c);
  validate_lts(lts, c);
  return fit_library(cfg, c, train_library(cfg.learners, c, lts));
}

Vec predict_stacked(const SpfLibrary& lib, const Vec& w, const Mat& X) {
  if (w.size() != lib.J()) throw Error(ErrorCode::ShapeMismatch, "weights length differs");
  Vec out = Vec::Zero(X.rows());
  for (Index j = 0; j < lib.J(); ++j)
    if (w(j) != 0.0) out += w(j) * predict(lib.spfs[j], X);
  return out;
}

Vec predict_stacked(const StackedModel& m, const Mat& X) {
  return predict_stacked(m.library, m.weights, X);
}

std::pair<StudyCollection, TrainingSetList> remove_sample(const StudyCollection& c,
                                                          const TrainingSetList& lts, Index i,
                                                          Index k) {
  std::vector<Study> studies = c.studies();
  Study& s = studies[k];
  const Index n = s.n();
  if (n < 2) throw Error(ErrorCode::StudyTooSmall, "study '" + s.id + "' has one sample");
  Vec y(n - 1);
  Mat X(n - 1, s.p());
  y << s.y.head(i), s.y.tail(n - 1 - i);
  if (s.p() > 0) X << s.X.topRows(i), s.X.bottomRows(n - 1 - i);
  s.y = std::move(y);
  s.X = std::move(X);
  TrainingSetList out;
  for (const auto& D : lts.sets) {
    IndexSet E;
    E.reserve(D.size());
    for (const auto& pr : D) {
      if (pr.k == k && pr.i == i) continue;
      E.push_back({pr.k == k && pr.i > i ? pr.i - 1 : pr.i, pr.k});
    }
    if (E.empty()) throw Error(ErrorCode::StudyTooSmall, "a training set would become empty");
    out.sets.push_back(std::move(E));
  }
  return {StudyCollection(std::move(studies)), std::move(out)};
}

LambdaSelection select_lambda_loo(const StackConfig& cfg_in, const StudyCollection& c, Index k,
                                  const std::vector<double>& grid, bool refine) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "lambda grid is empty");
  for (double l : grid)
    if (!(l >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda grid values must be >= 0");
  if (k < 0 || k >= c.K()) throw Error(ErrorCode::IndexOutOfRange, "study index");
  if (c.n(k) < 2)
    throw Error(ErrorCode::StudyTooSmall, "study '" + c[k].id + "' needs at least 2 samples");
  StackConfig cfg = cfg_in;
  cfg.task = Task::specialist_of(k);
  cfg.lambda = {};

  const TrainingSetList lts = resolve_lts(cfg.lts, c);
  const SpfLibrary full = train_library(cfg.learners, c, lts);
  const Index L = full.L(), J = full.J();
  std::vector<LooDowndater> down;
  if (cfg.fast_loo)
    for (Index j = 0; j < J; ++j)
      down.emplace_back(cfg.learners[j % L], c, lts.sets[j / L], full.spfs[j]);

  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grid[a] < grid[b]; });

  // Per held-out sample: penalty-free quadratic, anchor, SPF predictions and response.
  struct Held {
    Quadratic q;
    Vec anchor, pred;
    double y = 0.0;
    std::vector<Vec> w;  // solution per grid point
  };
  const Index n = c.n(k);
  const bool self_nu = is_self_nu(cfg);
  std::vector<Held> held(static_cast<std::size_t>(n));
  std::vector<double> err(grid.size(), 0.0);
  SolveOptions opt = cfg.solver;
  opt.assume_psd = opt.assume_psd || cfg.method != Method::CVcs;
  for (Index i = 0; i < n; ++i) {
    auto [c2, lts2] = remove_sample(c, lts, i, k);
    SpfLibrary lib = full;
    lib.lts = lts2;
    for (Index t = 0; t < lts.T(); ++t) {
      if (std::find(lts.sets[t].begin(), lts.sets[t].end(), SamplePair{i, k}) ==
          lts.sets[t].end())
        continue;
      for (Index l = 0; l < L; ++l)
        lib.spfs[t * L + l] = cfg.fast_loo ? down[t * L + l].without(i, k)
                                           : train(cfg.learners[l], c2, lts2.sets[t]);
    }
    Held& h = held[static_cast<std::size_t>(i)];
    h.anchor = cfg.anchor ? *cfg.anchor : generalist_anchor(cfg, c2, lib);
    h.pred = prediction_matrix(lib, c[k].X.row(i)).row(0).transpose();
    h.y = c[k].y(i);
    h.w.resize(grid.size());
    std::optional<Vec> warm;
    if (self_nu) {
      for (std::size_t g : order) {
        StackConfig cg = cfg;
        cg.solver.warm_start = warm;
        warm = h.w[g] = solve_self_nu(cg, c2, lib, grid[g], h.anchor).w;
      }
    } else {
      h.q = build_quadratic(cfg, c2, lib);
      for (std::size_t g : order) {
        opt.warm_start = warm;
        warm = h.w[g] = maximize(apply_penalty(h.q, grid[g], h.anchor), cfg.feasible, opt).w;
      }
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double e = h.y - h.pred.dot(h.w[g]);
      err[g] += e * e;
    }
  }
  LambdaSelection sel;
  sel.grid = grid;
  sel.cv_error.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g)
    sel.cv_error[g] = err[g] / static_cast<double>(n);
  const double best = *std::min_element(sel.cv_error.begin(), sel.cv_error.end());
  const double slack = 1e-10 * (1.0 + std::abs(best));
  sel.lambda = -1.0;
  std::size_t gbest = 0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (sel.cv_error[g] <= best + slack && grid[g] >= sel.lambda) sel.lambda = grid[g], gbest = g;
  if (!refine || self_nu || grid.size() < 2) return sel;

  // Bracket between the sorted neighbours of the grid argmin, searched in log lambda.
  const auto pos = static_cast<std::size_t>(std::find(order.begin(), order.end(), gbest) -
                                            order.begin());
  const double lo = grid[order[pos == 0 ? 0 : pos - 1]];
  const double hi = grid[order[std::min(pos + 1, order.size() - 1)]];
  if (!(lo > 0.0) || !(hi > lo)) return sel;
  auto cv = [&](double t) {
    const double lam = std::exp(t);
    double s = 0.0;
    for (auto& h : held) {
      opt.warm_start = h.w[gbest];
      const double e = h.y - h.pred.dot(maximize(apply_penalty(h.q, lam, h.anchor), cfg.feasible, opt).w);
      s += e * e;
    }
    return s / static_cast<double>(n);
  };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::log(lo), b = std::log(hi);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = cv(x1), f2 = cv(x2);
  while (b - a > 1e-4) {
    if (f1 <= f2) {
      b = x2, x2 = x1, f2 = f1;
      x1 = b - phi * (b - a), f1 = cv(x1);
    } else {
      a = x1, x1 = x2, f1 = f2;
      x2 = a + phi * (b - a), f2 = cv(x2);
    }
  }
  const double t = f1 <= f2 ? x1 : x2, f = std::min(f1, f2);
  if (f < best - slack) sel.lambda = std::exp(t);
  return sel;
}

IterativeResult iterative_generalist_average(const StudyCollection& c,
                                             const std::vector<LearnerSpec>& specs,
                                             const IterativeOptions& opt) {
  const Index K = c.K();
  if (K < 2) throw Error(ErrorCode::InsufficientStudies, "iterative averaging needs K >= 2");
  IterativeResult res;
  StackConfig base;
  base.method = Method::DR;
  base.learners = specs;
  base.solver = opt.solver;
  base.fast_loo = opt.fast_loo;
  res.library = train_library(specs, c, study_specific_lts(c));
  const Index J = res.library.J();

  Vec avg = Vec::Zero(J);
  for (Index k = 0; k < K; ++k) {
    StackConfig cfg = base;
    cfg.task = Task::specialist_of(k);
    avg += fit_library(cfg, c, res.library).weights;
  }
  avg /= static_cast<double>(K);
  res.trajectory.push_back(avg);

  for (Index r = 1; r <= opt.max_rounds; ++r) {
    Vec next = Vec::Zero(J);
    std::vector<double> lams;
    for (Index k = 0; k < K; ++k) {
      StackConfig cfg = base;
      cfg.task = Task::specialist_of(k);
      cfg.anchor = avg;
      cfg.lambda.kind = LambdaChoice::Kind::Auto;
      cfg.lambda.grid = opt.grid;
      cfg.lambda.refine = opt.refine_lambda;
      const StackedModel m = fit_library(cfg, c, res.library);
      lams.push_back(*m.lambda);
      next += m.weights;
    }
    next /= static_cast<double>(K);
    const double change = (next - avg).cwiseAbs().maxCoeff();
    avg = next;
    res.trajectory.push_back(avg);
    res.lambdas.push_back(std::move(lams));
    res.rounds = r;
    if (change < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.weights = avg;
  return res;
}

}  // namespace mstack
