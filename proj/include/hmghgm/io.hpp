#pragma once

// CSV and parameter-file input/output, price ingestion and the key-value
// run configuration.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmghgm/ecme.hpp"

namespace hmghgm {

/// Bad input file or configuration (exit code 2 at the command line).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decimal form with 17 significant digits, which round-trips exactly.
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// A labelled numeric table: the first column holds row labels (dates or
/// indices), the remaining columns are numeric.
struct LabelledMatrix {
  std::string label_name = "t";
  std::vector<std::string> labels;
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

/// Throws InputError naming row and column for an unparseable cell.
LabelledMatrix read_labelled_matrix(const std::filesystem::path& path);
void write_labelled_matrix(const std::filesystem::path& path, const LabelledMatrix& m);

struct ReturnsTable {
  std::vector<std::string> dates;
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // percent log-returns
  int dropped_rows = 0;    // price rows removed for missing values
};

/// Reads `date,<name1>,...` price CSV. Rows with any empty or NA price are
/// dropped first, then r_t = 100 (log p_t - log p_{t-1}). Dates must be
/// strictly increasing ISO-8601 strings. Throws InputError.
ReturnsTable ingest_prices(const std::filesystem::path& path);

/// Plain-text parameter file: K, d, pi, trans, then per state mu, lambda,
/// chi, psi, sigma and theta, one matrix row per line.
void write_model(const std::filesystem::path& path, const HmghgmModel& model);
/// Rebuilds emissions from the stored precision matrices so that exact
/// zeros survive. Throws InputError on malformed files.
HmghgmModel read_model(const std::filesystem::path& path);

/// `key = value` lines; '#' starts a comment. Throws InputError on syntax
/// errors.
class RunConfig {
 public:
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// "3", "1-4" or "1,2,4". Throws InputError.
std::vector<int> parse_k_spec(const std::string& spec);

/// "0.1", "0.1,0.2", "lo:hi:n" (log-spaced) or "lo:hi:n:lin" (equispaced).
/// Throws InputError.
std::vector<double> parse_rho_spec(const std::string& spec);

}  // namespace hmghgm
