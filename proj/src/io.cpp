#include "mstack/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace mstack {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  std::string r = s.substr(b, e - b + 1);
  if (r.size() >= 2 && r.front() == '"' && r.back() == '"') r = r.substr(1, r.size() - 2);
  return r;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cur += ch;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  if (s.empty()) throw Error(ErrorCode::DataError, where + ": missing value");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    throw Error(ErrorCode::DataError, where + ": '" + s + "' is not a number");
  if (!std::isfinite(v)) throw Error(ErrorCode::DataError, where + ": non-finite value");
  return v;
}

}  // namespace

StudyCollection parse_collection(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::DataError, source + ": empty file");
  const auto header = split_fields(line);
  if (header.size() < 2 || header[0] != "study" || header[1] != "y")
    throw Error(ErrorCode::DataError, source + ": header must start with 'study,y'");
  const Index p = static_cast<Index>(header.size()) - 2;

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (static_cast<Index>(f.size()) != p + 2)
      throw Error(ErrorCode::DataError, where + ": expected " + std::to_string(p + 2) + " fields");
    if (f[0].empty()) throw Error(ErrorCode::DataError, where + ": missing study id");
    std::vector<double> v(p + 1);
    for (Index j = 0; j <= p; ++j) v[j] = parse_number(f[j + 1], where);
    auto it = rows.find(f[0]);
    if (it == rows.end()) {
      order.push_back(f[0]);
      it = rows.emplace(f[0], std::vector<std::vector<double>>{}).first;
    }
    it->second.push_back(std::move(v));
  }
  if (order.empty()) throw Error(ErrorCode::DataError, source + ": no data rows");

  std::vector<Study> studies;
  for (const auto& id : order) {
    const auto& r = rows[id];
    Study s;
    s.id = id;
    s.y.resize(static_cast<Index>(r.size()));
    s.X.resize(static_cast<Index>(r.size()), p);
    for (Index i = 0; i < s.y.size(); ++i) {
      s.y(i) = r[i][0];
      for (Index j = 0; j < p; ++j) s.X(i, j) = r[i][j + 1];
    }
    studies.push_back(std::move(s));
  }
  return StudyCollection(std::move(studies));
}

StudyCollection read_collection(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DataError, "cannot open data file '" + path + "'");
  return parse_collection(in, path);
}

void write_collection(std::ostream& out, const StudyCollection& c) {
  out << "study,y";
  for (Index j = 0; j < c.p(); ++j) out << ",x" << (j + 1);
  out << '\n';
  for (Index k = 0; k < c.K(); ++k) {
    const Study& s = c[k];
    for (Index i = 0; i < s.n(); ++i) {
      out << s.id << ',' << format_double(s.y(i));
      for (Index j = 0; j < c.p(); ++j) out << ',' << format_double(s.X(i, j));
      out << '\n';
    }
  }
}

void write_collection(const std::string& path, const StudyCollection& c) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::DataError, "cannot write '" + path + "'");
  write_collection(out, c);
}

struct CsvWriter::Impl {
  std::ofstream out;
  std::string path;
  std::size_t width = 0;
  std::size_t filled = 0;
};

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> header)
    : impl_(std::make_unique<Impl>()) {
  impl_->path = path;
  impl_->out.open(path);
  if (!impl_->out) {
    throw Error(ErrorCode::DataError, "cannot write '" + path + "'");
  }
  impl_->width = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) impl_->out << (i ? "," : "") << header[i];
  impl_->out << '\n';
}

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (impl_->filled == impl_->width)
    throw Error(ErrorCode::InvalidArgument, impl_->path + ": row wider than header");
  impl_->out << (impl_->filled ? "," : "") << s;
  ++impl_->filled;
  return *this;
}

CsvWriter& CsvWriter::cell(double x) { return cell(format_double(x)); }
CsvWriter& CsvWriter::cell(long long x) { return cell(std::to_string(x)); }
CsvWriter& CsvWriter::empty() { return cell(std::string()); }

void CsvWriter::end_row() {
  if (impl_->filled != impl_->width)
    throw Error(ErrorCode::InvalidArgument, impl_->path + ": ragged row");
  impl_->out << '\n';
  impl_->filled = 0;
}

void CsvWriter::close() {
  if (impl_->out.is_open()) impl_->out.close();
}

CsvWriter::CsvWriter(CsvWriter&&) noexcept = default;
CsvWriter& CsvWriter::operator=(CsvWriter&&) noexcept = default;
CsvWriter::~CsvWriter() = default;

Json ordering_json(const SpfLibrary& lib) {
  Json o = Json::array();
  for (Index t = 0; t < lib.T(); ++t)
    for (Index l = 0; l < lib.L(); ++l) o.push_back(Json::array({t, l}));
  return o;
}

namespace {

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

Json model_to_json(const StackedModel& m, const StudyCollection& c) {
  Json j;
  j["weights"] = vec_json(m.weights);
  j["ordering"] = ordering_json(m.library);
  j["method"] = to_string(m.config.method);
  if (m.config.method == Method::CVcs) j["cs_mode"] = to_string(m.config.cs_mode);
  j["task"] = m.config.task.specialist ? "specialist:" + c[m.config.task.k].id : "generalist";
  j["lambda"] = m.lambda ? Json(*m.lambda) : Json(nullptr);
  j["seed"] = m.config.seed;
  Json learners = Json::array();
  for (const auto& l : m.library.learners) learners.push_back(to_string(l));
  j["learners"] = learners;
  j["constraint"] = to_string(m.config.feasible);
  Json ids = Json::array();
  for (Index k = 0; k < c.K(); ++k) ids.push_back(c[k].id);
  j["studies"] = ids;
  j["converged"] = m.report.converged;
  j["kkt_residual"] = m.report.kkt_residual;
  if (m.selection) {
    j["lambda_grid"] = m.selection->grid;
    j["loo_error"] = m.selection->cv_error;
  }
  return j;
}

Json quadratic_to_json(const Quadratic& q, const SpfLibrary& lib) {
  Json j;
  Json S = Json::array();
  for (Index r = 0; r < q.Sigma.rows(); ++r) S.push_back(vec_json(q.Sigma.row(r).transpose()));
  j["Sigma"] = S;
  j["b"] = vec_json(q.b);
  j["c"] = q.c;
  j["ordering"] = ordering_json(lib);
  return j;
}

Quadratic quadratic_from_json(const Json& j) {
  try {
    const auto& S = j.at("Sigma");
    const auto& b = j.at("b");
    const Index d = static_cast<Index>(b.size());
    Quadratic q;
    q.Sigma.resize(d, d);
    q.b.resize(d);
    if (static_cast<Index>(S.size()) != d)
      throw Error(ErrorCode::ShapeMismatch, "quadratic: Sigma rows differ from b length");
    for (Index r = 0; r < d; ++r) {
      q.b(r) = b.at(r).get<double>();
      if (static_cast<Index>(S.at(r).size()) != d)
        throw Error(ErrorCode::ShapeMismatch, "quadratic: Sigma is not square");
      for (Index c = 0; c < d; ++c) q.Sigma(r, c) = S.at(r).at(c).get<double>();
    }
    q.c = j.value("c", 0.0);
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("quadratic JSON: ") + e.what());
  }
}

TrainingSetList lts_from_json(const Json& j, const StudyCollection& c) {
  std::map<std::string, Index> index;
  for (Index k = 0; k < c.K(); ++k) index[c[k].id] = k;
  auto study_of = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::ConfigError, "--lts: unknown study '" + id + "'");
    return it->second;
  };
  TrainingSetList lts;
  try {
    for (const auto& set : j.at("sets")) {
      IndexSet D;
      for (const auto& e : set) {
        if (e.is_string()) {
          const Index k = study_of(e.get<std::string>());
          for (Index i = 0; i < c.n(k); ++i) D.push_back({i, k});
        } else {
          const Index k = study_of(e.at("study").get<std::string>());
          if (e.contains("rows")) {
            for (const auto& r : e.at("rows")) D.push_back({r.get<Index>() - 1, k});
          } else {
            for (Index i = 0; i < c.n(k); ++i) D.push_back({i, k});
          }
        }
      }
      lts.sets.push_back(std::move(D));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("--lts: ") + e.what());
  }
  validate_lts(lts, c);
  return lts;
}

void apply_scenario_json(Scenario& s, const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "--params must be a JSON object");
  static const char* known[] = {"K", "n", "p", "beta0", "sigma", "sigma_beta", "mix",
                                "until_pattern"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known))
      throw Error(ErrorCode::ConfigError, "--params: unknown field '" + it.key() + "'");
  try {
    if (j.contains("K")) s.K = j["K"].get<Index>();
    if (j.contains("p")) s.p = j["p"].get<Index>();
    if (j.contains("n")) {
      s.n.clear();
      if (j["n"].is_array())
        for (const auto& e : j["n"]) s.n.push_back(e.get<Index>());
      else
        s.n.push_back(j["n"].get<Index>());
    }
    if (j.contains("beta0")) {
      const Json& v = j["beta0"];
      if (v.is_array()) {
        s.beta0.resize(static_cast<Index>(v.size()));
        for (Index i = 0; i < s.beta0.size(); ++i) s.beta0(i) = v[i].get<double>();
      } else {
        s.beta0 = Vec::Constant(s.p, v.get<double>());
      }
    }
    if (j.contains("sigma")) s.sigma = j["sigma"].get<double>();
    if (j.contains("sigma_beta")) s.sigma_beta = j["sigma_beta"].get<double>();
    if (j.contains("mix")) s.mix = j["mix"].get<double>();
    if (j.contains("until_pattern")) s.until_pattern = j["until_pattern"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("--params: ") + e.what());
  }
}

Json scenario_to_json(const Scenario& s) {
  Json j;
  j["kind"] = to_string(s.kind);
  j["K"] = s.K;
  j["n"] = s.n;
  j["p"] = s.kind == ScenarioKind::Ex1 ? 0 : s.p;
  if (s.beta0.size()) j["beta0"] = vec_json(s.beta0);
  j["sigma"] = s.sigma;
  j["sigma_beta"] = s.sigma_beta;
  if (s.kind == ScenarioKind::Ex3) {
    j["mix"] = s.mix;
    j["until_pattern"] = s.until_pattern;
  }
  return j;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open JSON file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::DataError, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace mstack
