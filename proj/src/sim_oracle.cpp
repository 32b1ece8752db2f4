#include "mstack/sim_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace mstack {

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Ex1: return "ex1";
    case ScenarioKind::Ex2: return "ex2";
    case ScenarioKind::Ex3: return "ex3";
    case ScenarioKind::HierUniform: return "hier-uniform";
  }
  return "?";
}

ScenarioKind parse_scenario(const std::string& s) {
  if (s == "ex1") return ScenarioKind::Ex1;
  if (s == "ex2") return ScenarioKind::Ex2;
  if (s == "ex3") return ScenarioKind::Ex3;
  if (s == "hier-uniform") return ScenarioKind::HierUniform;
  throw Error(ErrorCode::ConfigError, "--scenario: unknown scenario '" + s + "'");
}

void Scenario::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, "scenario: " + m); };
  if (K < 1) fail("K must be >= 1");
  if (n.empty() || (n.size() != 1 && static_cast<Index>(n.size()) != K))
    fail("n must have one entry or K entries");
  for (Index v : n)
    if (v < 1) fail("sample sizes must be positive");
  if (kind != ScenarioKind::Ex1 && p < 1) fail("p must be >= 1");
  if (!(sigma >= 0.0) || !(sigma_beta >= 0.0)) fail("sigma and sigma_beta must be >= 0");
  if (!(mix >= 0.0 && mix <= 1.0)) fail("mix must lie in [0, 1]");
  if (beta0.size() != 0 && kind != ScenarioKind::Ex1 && beta0.size() != p)
    fail("beta0 must have p entries");
  if (until_pattern && (kind != ScenarioKind::Ex3 || K != 3))
    fail("until_pattern needs the ex3 scenario with K = 3");
}

namespace {

constexpr Index kMaxPatternAttempts = 1000;

Vec default_beta0(const Scenario& s) {
  if (s.kind == ScenarioKind::Ex1) return Vec();
  if (s.kind == ScenarioKind::HierUniform) return Vec::Constant(s.p, 0.5);
  return s.beta0.size() ? s.beta0 : Vec::Ones(s.p);
}

TruthBundle hyper_truth(const Scenario& s) {
  TruthBundle t;
  t.kind = s.kind;
  t.sigma = s.sigma;
  t.sigma_beta = s.sigma_beta;
  t.beta0 = default_beta0(s);
  const Index p = s.kind == ScenarioKind::Ex1 ? 0 : s.p;
  t.mu = Vec::Zero(s.K);
  t.beta = Mat::Zero(p, s.K);
  switch (s.kind) {
    case ScenarioKind::Ex1:
      t.mu_var = s.sigma * s.sigma;
      t.noise_var = 1.0;
      break;
    case ScenarioKind::Ex2:
      t.beta_var = s.sigma_beta * s.sigma_beta;
      t.noise_var = s.sigma * s.sigma;
      break;
    case ScenarioKind::Ex3:
      t.beta_var = (1.0 - s.mix) * s.sigma_beta * s.sigma_beta;
      t.noise_var = s.sigma * s.sigma;
      break;
    case ScenarioKind::HierUniform:
      t.beta_var = 1.0 / 12.0;
      t.x_moment = 1.0 / 3.0;
      t.noise_var = 1.0 / 3.0;
      break;
  }
  return t;
}

// One study-level draw; returns true when an Ex3 coefficient took the point mass.
bool draw_study_params(const Scenario& s, const TruthBundle& t, RandomStream& rs, double& mu,
                       Eigen::Ref<Vec> beta) {
  switch (s.kind) {
    case ScenarioKind::Ex1:
      mu = rs.normal(0.0, s.sigma);
      return false;
    case ScenarioKind::Ex2:
      for (Index j = 0; j < beta.size(); ++j) beta(j) = rs.normal(t.beta0(j), s.sigma_beta);
      return false;
    case ScenarioKind::Ex3: {
      const bool point = rs.uniform() < s.mix;
      for (Index j = 0; j < beta.size(); ++j)
        beta(j) = point ? t.beta0(j) : rs.normal(t.beta0(j), s.sigma_beta);
      return point;
    }
    case ScenarioKind::HierUniform:
      for (Index j = 0; j < beta.size(); ++j) beta(j) = rs.uniform();
      return false;
  }
  return false;
}

double draw_x(ScenarioKind kind, RandomStream& rs) {
  return kind == ScenarioKind::HierUniform ? rs.uniform(-1.0, 1.0) : rs.normal();
}

double draw_noise(const Scenario& s, RandomStream& rs) {
  switch (s.kind) {
    case ScenarioKind::Ex1: return rs.normal();
    case ScenarioKind::HierUniform: return rs.uniform(-1.0, 1.0);
    default: return rs.normal(0.0, s.sigma);
  }
}

// Intercepts and slopes of every SPF in the library, as a J vector and a p x J matrix.
void spf_linear_parts(const SpfLibrary& lib, Index p, Vec& a, Mat& B) {
  const Index J = lib.J();
  a.resize(J);
  B = Mat::Zero(p, J);
  for (Index j = 0; j < J; ++j) {
    const Spf& f = lib.spfs[j];
    a(j) = f.intercept();
    if (f.learner.kind != LearnerSpec::Kind::MeanOnly) B.col(j) = f.slope(p);
  }
}

}  // namespace

std::pair<StudyCollection, TruthBundle> generate(const Scenario& s) {
  s.validate();
  TruthBundle t = hyper_truth(s);
  const Index p = t.beta.rows();
  const Index max_attempts = s.until_pattern ? kMaxPatternAttempts : 1;
  bool matched = false;
  for (Index attempt = 0; attempt < max_attempts && !matched; ++attempt) {
    bool pattern = true;
    for (Index k = 0; k < s.K; ++k) {
      RandomStream rs(s.seed, s.replicate, static_cast<std::uint32_t>(k),
                      purpose::kHyper + static_cast<std::uint32_t>(attempt) * purpose::kAttempt);
      double mu = 0.0;
      const bool point = draw_study_params(s, t, rs, mu, t.beta.col(k));
      t.mu(k) = mu;
      if (k < 2 ? !point : (point || t.beta.col(k) == t.beta0)) pattern = false;
    }
    t.attempts = attempt + 1;
    matched = !s.until_pattern || pattern;
  }
  if (!matched)
    throw Error(ErrorCode::NotConverged, "ex3: coefficient pattern not reached in 1000 draws");

  std::vector<Study> studies;
  studies.reserve(s.K);
  for (Index k = 0; k < s.K; ++k) {
    const Index nk = s.n_of(k);
    const auto kk = static_cast<std::uint32_t>(k);
    RandomStream rx(s.seed, s.replicate, kk, purpose::kCovariates);
    RandomStream re(s.seed, s.replicate, kk, purpose::kNoise);
    Study st;
    st.id = std::to_string(k + 1);
    st.X.resize(nk, p);
    st.y.resize(nk);
    for (Index i = 0; i < nk; ++i) {
      for (Index j = 0; j < p; ++j) st.X(i, j) = draw_x(s.kind, rx);
      st.y(i) = t.mu(k) + st.X.row(i).dot(t.beta.col(k)) + draw_noise(s, re);
    }
    studies.push_back(std::move(st));
  }
  return {StudyCollection(std::move(studies)), std::move(t)};
}

std::pair<Mat, Vec> draw_fresh(const Scenario& s, const TruthBundle& t, Index region, Index m,
                               RandomStream& rs) {
  const Index p = t.beta.rows();
  if (region >= t.mu.size()) throw Error(ErrorCode::IndexOutOfRange, "region out of range");
  Mat X(m, p);
  Vec y(m);
  Vec beta(p);
  for (Index i = 0; i < m; ++i) {
    double mu;
    if (region >= 0) {
      mu = t.mu(region);
      beta = t.beta.col(region);
    } else {
      mu = t.mu0;
      draw_study_params(s, t, rs, mu, beta);
    }
    for (Index j = 0; j < p; ++j) X(i, j) = draw_x(s.kind, rs);
    y(i) = mu + X.row(i).dot(beta) + draw_noise(s, rs);
  }
  return {std::move(X), std::move(y)};
}

Quadratic oracle_quadratic(const SpfLibrary& lib, const TruthBundle& t, Index region) {
  const Index p = t.beta.rows();
  if (region >= t.mu.size()) throw Error(ErrorCode::IndexOutOfRange, "region out of range");
  Vec a;
  Mat B;
  spf_linear_parts(lib, p, a, B);
  const double sx = t.x_moment;
  Quadratic q;
  q.Sigma = a * a.transpose() + sx * B.transpose() * B;
  if (region >= 0) {
    const double mu = t.mu(region);
    q.b = a * mu + sx * B.transpose() * t.beta.col(region);
    q.c = mu * mu + sx * t.beta.col(region).squaredNorm() + t.noise_var;
  } else {
    q.b = a * t.mu0 + (p ? Vec(sx * B.transpose() * t.beta0) : Vec::Zero(a.size()));
    q.c = t.mu0 * t.mu0 + t.mu_var + sx * (t.beta0.squaredNorm() + p * t.beta_var) + t.noise_var;
  }
  return q;
}

double mse_region(const SpfLibrary& lib, const Vec& w, const TruthBundle& t, Index region) {
  return mse(oracle_quadratic(lib, t, region), w);
}

double mse_region_mc(const SpfLibrary& lib, const Vec& w, const Scenario& s,
                     const TruthBundle& t, Index region, Index mc_n, std::uint64_t seed) {
  if (mc_n < 1) throw Error(ErrorCode::InvalidArgument, "mc_n must be >= 1");
  const auto study = static_cast<std::uint32_t>(region < 0 ? 0xffffffffu : region);
  RandomStream rs(seed, s.replicate, study, purpose::kFresh);
  auto [X, y] = draw_fresh(s, t, region, mc_n, rs);
  const Vec r = y - prediction_matrix(lib, X) * w;
  return r.squaredNorm() / static_cast<double>(mc_n);
}

double principal_deviation(const Quadratic& est, const Quadratic& truth, const Vec& w,
                           bool drop_constant) {
  Vec db = est.b - truth.b;
  if (drop_constant) db.array() -= db.mean();
  return -w.dot((est.Sigma - truth.Sigma) * w) + 2.0 * db.dot(w);
}

double psi(const Vec& w, const Mat& B, const Vec& beta0, double sigma_beta, double sigma) {
  if (B.cols() != w.size() || B.rows() != beta0.size())
    throw Error(ErrorCode::ShapeMismatch, "psi: dimensions are inconsistent");
  return (B * w - beta0).squaredNorm() + B.rows() * sigma_beta * sigma_beta + sigma * sigma;
}

double psi(const Vec& w, const Mat& B, const Vec& a, const TruthBundle& t) {
  if (B.cols() != w.size() || a.size() != w.size() || B.rows() != t.beta0.size())
    throw Error(ErrorCode::ShapeMismatch, "psi: dimensions are inconsistent");
  const double bias = a.dot(w) - t.mu0;
  return bias * bias + t.mu_var +
         t.x_moment * ((B * w - t.beta0).squaredNorm() + B.rows() * t.beta_var) + t.noise_var;
}

Vec oracle_generalist_weights_ex1(double y1, double y2) {
  Vec w(2);
  if (y1 == y2) {
    w << 0.5, 0.5;
  } else if (y1 * y2 < 0) {
    const double w1 = std::abs(y2) / (std::abs(y1) + std::abs(y2));
    w << w1, 1.0 - w1;
  } else if (std::abs(y1) <= std::abs(y2)) {
    w << 1.0, 0.0;
  } else {
    w << 0.0, 1.0;
  }
  return w;
}

double oracle_specialist_weight_ex1(double y1, double y2, double mu1) {
  if (y1 == y2) return 0.5;
  return std::clamp((mu1 - y2) / (y1 - y2), 0.0, 1.0);
}

std::string to_string(PdTag t) {
  switch (t) {
    case PdTag::DrGen: return "dr-gen";
    case PdTag::DrSpec: return "dr-spec";
    case PdTag::WsSpec: return "ws-spec";
    case PdTag::CsGen: return "cs-gen";
    case PdTag::BayesSpec: return "bayes-spec";
  }
  return "?";
}

PdStats pd_closed_forms_ex1(const Vec& w, double sigma, Index n, PdTag tag, Index M) {
  if (w.size() != 2) throw Error(ErrorCode::ShapeMismatch, "example 1 has two weights");
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
  const double w1 = w(0), w2 = w(1), nn = static_cast<double>(n);
  const double s2 = sigma * sigma + 1.0 / nn;  // variance of a study mean
  const double q = w1 * w1 + w2 * w2;
  PdStats r;
  r.w = w;
  r.tag = tag;
  switch (tag) {
    case PdTag::DrGen:
      r.mean = s2;
      r.variance = s2 * s2 * (1.0 + 2.0 * q);
      break;
    case PdTag::DrSpec:
      r.mean = 2.0 * w1 / nn;
      r.variance = 4.0 * (sigma * sigma + 2.0 / nn) * w1 * w1 / nn + 4.0 * s2 * w2 * w2 / nn;
      break;
    case PdTag::WsSpec: {
      if (M < 2) throw Error(ErrorCode::InvalidArgument, "M must be >= 2");
      const double rr = static_cast<double>(M - 1);
      const double a = -w1 * w1 / (rr * rr) - 2.0 * w1 / rr;
      const double b = -w2 * w2 / (rr * rr);
      const double c = -2.0 * w1 * w2 / (rr * rr) - 2.0 * w2 / rr;
      const double dr_var =
          4.0 * (sigma * sigma + 2.0 / nn) * w1 * w1 / nn + 4.0 * s2 * w2 * w2 / nn;
      r.mean = -q / (nn * rr);
      r.variance = dr_var + rr / (nn * nn) * (2.0 * a * a + 2.0 * b * b + c * c);
      break;
    }
    case PdTag::CsGen:
      r.mean = -s2 * q;
      r.variance = 2.0 * s2 * s2 * q * q;
      break;
    case PdTag::BayesSpec: {
      if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
      // d = 2AB with A the shrunken centre error and B the ensemble; both Gaussian.
      const double h = 1.0 / (2.0 * sigma * sigma);
      const double a1 = (nn + h) / (nn + 2.0 * h), a2 = h / (nn + 2.0 * h);
      const double var_a = a1 * a1 / nn + a2 * a2 * (2.0 * sigma * sigma + 1.0 / nn);
      const double var_b = q * s2;
      r.mean = 1.0 / nn;
      r.variance = 4.0 * var_a * var_b + 1.0 / (nn * nn);
      break;
    }
  }
  return r;
}

double pd_closed_forms_ex2(const Vec& w, Index K, Index n, Index p, const Vec& beta0,
                           double sigma_beta, double sigma, Ex2Tag tag) {
  if (w.size() != K) throw Error(ErrorCode::ShapeMismatch, "weights must have K entries");
  if (n <= p + 1) throw Error(ErrorCode::Undefined, "expected PD needs n > p + 1");
  if (K < 2) throw Error(ErrorCode::InsufficientStudies, "expected PD needs K >= 2");
  const double Kd = static_cast<double>(K), nd = static_cast<double>(n),
               pd = static_cast<double>(p);
  const double s2 = sigma * sigma, sb2 = sigma_beta * sigma_beta;
  const double ww = w.squaredNorm();
  if (tag == Ex2Tag::DR)
    return pd * (pd + 1.0) * s2 / (Kd * nd * (nd - pd - 1.0)) * ww +
           2.0 * (pd * sb2 + pd * s2 / nd) / Kd * w.sum();
  const double b0 = beta0.squaredNorm();
  const double cross = w.sum() * w.sum() - ww;
  return b0 / ((Kd - 1.0) * (Kd - 1.0)) * cross -
         (b0 + pd * sb2 + pd * s2 / (nd - pd - 1.0)) / (Kd - 1.0) * ww;
}

double bayes_center_ex1(double y1, double y2, double sigma, Index n, Index k) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  const double nn = static_cast<double>(n), h = 1.0 / (2.0 * sigma * sigma);
  const double own = k == 0 ? y1 : y2, other = k == 0 ? y2 : y1;
  return ((nn + h) * own + h * other) / (nn + 2.0 * h);
}

BayesUtilities bayes_oracle_utilities_ex1(const Vec& w, double y1, double y2, double sigma,
                                          Index n) {
  if (w.size() != 2) throw Error(ErrorCode::ShapeMismatch, "example 1 has two weights");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be positive");
  const double nn = static_cast<double>(n), h = 1.0 / (2.0 * sigma * sigma);
  const double yw = w(0) * y1 + w(1) * y2;
  BayesUtilities u;
  const double g = yw - 0.5 * (y1 + y2);
  u.generalist = -g * g - 1.0 - 1.5 * sigma * sigma - 1.0 / (2.0 * nn);
  const double spread = (nn + h) / (nn * (nn + 2.0 * h));
  for (Index k = 0; k < 2; ++k) {
    const double e = yw - bayes_center_ex1(y1, y2, sigma, n, k);
    u.specialist[k] = -e * e - 1.0 - spread;
  }
  return u;
}

Vec oracle_limit_weights(const Mat& B, const Vec& beta0, const FeasibleSet& W,
                         const SolveOptions& opt) {
  if (B.rows() != beta0.size())
    throw Error(ErrorCode::ShapeMismatch, "B rows differ from beta0 length");
  Quadratic q(B.transpose() * B, B.transpose() * beta0, beta0.squaredNorm());
  SolveOptions o = opt;
  o.assume_psd = true;
  return maximize(q, W, o).w;
}

Quadratic limit_dr_quadratic(const Mat& B, double s_x) {
  const double K = static_cast<double>(B.cols());
  const Vec bbar = B.rowwise().mean();
  return {s_x * B.transpose() * B, s_x * B.transpose() * bbar,
          s_x * B.colwise().squaredNorm().sum() / K};
}

Quadratic limit_cs_quadratic(const Mat& B, double s_x) {
  const Index K = B.cols();
  if (K < 2) throw Error(ErrorCode::InsufficientStudies, "cross-set limit needs K >= 2");
  const double Kd = static_cast<double>(K), r = Kd - 1.0;
  const Mat G = B.transpose() * B;
  const Vec D = G.diagonal();
  Mat S = Kd * (Kd - 2.0) / (r * r) * G;
  S.diagonal() += Kd / (r * r) * D;
  const Vec b = (G * Vec::Ones(K) - D) / r;
  return {s_x * S, s_x * b, s_x * D.sum() / Kd};
}

AsymptoticWeights asymptotic_cs_weights(const Mat& B) {
  const Index K = B.cols();
  if (K <= 2) throw Error(ErrorCode::InsufficientStudies, "asymptotic weights need K > 2");
  const double Kd = static_cast<double>(K);
  const Mat G = B.transpose() * B;
  Mat A = (Kd - 2.0) * G;
  A.diagonal() += G.diagonal();
  const Vec rhs = (G - Mat(G.diagonal().asDiagonal())) * Vec::Ones(K);
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible())
    throw Error(ErrorCode::SingularSystem, "(K-2) B'B + D is singular");
  AsymptoticWeights r;
  r.cs = (Kd - 1.0) / Kd * lu.solve(rhs);
  r.dr = Vec::Constant(K, 1.0 / Kd);
  return r;
}

PcaResult pca_project(const Mat& vectors) {
  const Index m = vectors.cols();
  if (m < 2) throw Error(ErrorCode::InvalidArgument, "pca needs at least two vectors");
  const Mat C = vectors.colwise() - vectors.rowwise().mean();
  const Mat G = C.transpose() * C;
  Eigen::SelfAdjointEigenSolver<Mat> es(G);
  PcaResult r;
  r.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
  const Mat U = es.eigenvectors().rowwise().reverse();
  r.coords = Mat::Zero(m, 2);
  const double top = r.eigenvalues(0);
  const double cut = 1e-12 * std::max(top, 1e-300);
  for (Index c = 0; c < 2; ++c) {
    if (!(r.eigenvalues(c) > cut)) {
      r.degenerate = true;
      continue;
    }
    Vec u = U.col(c);
    for (Index i = 0; i < m; ++i) {
      if (std::abs(u(i)) > 1e-12) {
        if (u(i) < 0) u = -u;
        break;
      }
    }
    r.coords.col(c) = std::sqrt(r.eigenvalues(c)) * u;
  }
  return r;
}

}  // namespace mstack
