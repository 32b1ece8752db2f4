#pragma once

#include "mstack/data_model.hpp"
#include "mstack/pipelines.hpp"
#include "mstack/sim_oracle.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace mstack {

using Json = nlohmann::ordered_json;

// 17 significant digits (%.17g), enough to round-trip; non-finite values print as nan/inf.
std::string format_double(double x);

// Comma-separated multi-study file: header `study,y,<features...>`, one row per
// sample. Studies are indexed in order of first appearance.
StudyCollection parse_collection(std::istream& in, const std::string& source = "<stream>");
StudyCollection read_collection(const std::string& path);
void write_collection(std::ostream& out, const StudyCollection& c);
void write_collection(const std::string& path, const StudyCollection& c);

// Tidy result table written row by row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> header);
  CsvWriter& cell(double x);
  CsvWriter& cell(long long x);
  CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
  CsvWriter& cell(long x) { return cell(static_cast<long long>(x)); }
  CsvWriter& cell(const std::string& s);
  CsvWriter& cell(const char* s) { return cell(std::string(s)); }
  CsvWriter& empty();
  void end_row();
  void close();
  CsvWriter(CsvWriter&&) noexcept;
  CsvWriter& operator=(CsvWriter&&) noexcept;
  ~CsvWriter();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Flat (t, l) ordering of library weights.
Json ordering_json(const SpfLibrary& lib);

Json model_to_json(const StackedModel& m, const StudyCollection& c);
Json quadratic_to_json(const Quadratic& q, const SpfLibrary& lib);
Quadratic quadratic_from_json(const Json& j);

// Training sets given as {"sets": [[entry, ...], ...]} where an entry is a study
// id (the whole study) or {"study": id, "rows": [i, ...]} with 1-based rows.
TrainingSetList lts_from_json(const Json& j, const StudyCollection& c);

// Overlays JSON fields on a scenario: K, n (number or list), p, beta0 (number or
// list), sigma, sigma_beta, mix, until_pattern.
void apply_scenario_json(Scenario& s, const Json& j);
Json scenario_to_json(const Scenario& s);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace mstack
