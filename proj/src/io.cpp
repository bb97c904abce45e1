#include "hmghgm/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hmghgm/sparse.hpp"

namespace hmghgm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool is_missing(const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s.empty() || s == "na" || s == "nan" || s == "null";
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  const int month = std::stoi(s.substr(5, 2));
  const int day = std::stoi(s.substr(8, 2));
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(field);
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      record.push_back(field);
      field.clear();
      field_started = false;
      if (!(record.size() == 1 && record[0].empty())) records.push_back(record);
      record.clear();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw InputError(path.string() + ": unterminated quoted field");
  if (field_started || !record.empty()) {
    record.push_back(field);
    records.push_back(record);
  }
  if (records.empty()) throw InputError(path.string() + ": empty file");

  CsvTable table;
  table.header = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw InputError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(records[r].size()) + " fields, header has " +
                       std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out = open_out(path);
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out << ',';
      out << quote_if_needed(fields[i]);
    }
    out << "\r\n";
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  if (!out) throw InputError("failed writing " + path.string());
}

LabelledMatrix read_labelled_matrix(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 2) throw InputError(path.string() + ": need a label column and at least one value column");
  LabelledMatrix m;
  m.label_name = table.header.front();
  m.names.assign(table.header.begin() + 1, table.header.end());
  m.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(m.names.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    m.labels.push_back(table.rows[r][0]);
    for (std::size_t c = 1; c < table.header.size(); ++c) {
      const auto v = parse_number(table.rows[r][c]);
      if (!v) {
        throw InputError(path.string() + ": cannot parse row " + std::to_string(r + 2) + ", column " +
                         table.header[c] + ": '" + table.rows[r][c] + "'");
      }
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = *v;
    }
  }
  return m;
}

void write_labelled_matrix(const std::filesystem::path& path, const LabelledMatrix& m) {
  if (static_cast<Eigen::Index>(m.labels.size()) != m.values.rows() ||
      static_cast<Eigen::Index>(m.names.size()) != m.values.cols()) {
    throw std::invalid_argument("write_labelled_matrix: labels or names do not match the matrix");
  }
  CsvTable table;
  table.header.push_back(m.label_name);
  table.header.insert(table.header.end(), m.names.begin(), m.names.end());
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    std::vector<std::string> row{m.labels[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) row.push_back(format_double(m.values(r, c)));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

ReturnsTable ingest_prices(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() < 2 || trim(table.header[0]) != "date") {
    throw InputError(path.string() + ": header must be date,<name1>,...");
  }
  ReturnsTable out;
  out.names.assign(table.header.begin() + 1, table.header.end());
  const auto d = static_cast<Eigen::Index>(out.names.size());
  std::vector<std::string> dates;
  std::vector<Eigen::RowVectorXd> prices;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string date = trim(row[0]);
    if (!is_iso_date(date)) throw InputError(path.string() + ": row " + std::to_string(r + 2) + ": bad date '" + row[0] + "'");
    bool missing = false;
    Eigen::RowVectorXd p(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      const std::string& cell = row[static_cast<std::size_t>(c + 1)];
      if (is_missing(cell)) {
        missing = true;
        continue;
      }
      const auto v = parse_number(cell);
      if (!v || !(*v > 0.0) || !std::isfinite(*v)) {
        throw InputError(path.string() + ": row " + std::to_string(r + 2) + ", column " +
                         out.names[static_cast<std::size_t>(c)] + ": invalid price '" + cell + "'");
      }
      p[c] = *v;
    }
    if (missing) {
      ++out.dropped_rows;
      continue;
    }
    if (!dates.empty() && !(dates.back() < date)) {
      throw InputError(path.string() + ": dates must be strictly increasing (row " + std::to_string(r + 2) + ")");
    }
    dates.push_back(date);
    prices.push_back(p);
  }
  if (prices.size() < 3) throw InputError(path.string() + ": fewer than 3 complete price rows");
  out.values.resize(static_cast<Eigen::Index>(prices.size() - 1), d);
  for (std::size_t t = 1; t < prices.size(); ++t) {
    out.values.row(static_cast<Eigen::Index>(t - 1)) =
        100.0 * (prices[t].array().log() - prices[t - 1].array().log()).matrix();
    out.dates.push_back(dates[t]);
  }
  return out;
}

void write_model(const std::filesystem::path& path, const HmghgmModel& model) {
  std::ofstream out = open_out(path);
  auto vec = [&out](const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
    out << "\n";
  };
  auto mat = [&out](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
      out << "\n";
    }
  };
  out << "# hmghgm parameter file\n";
  out << "K " << model.num_states() << "\n";
  out << "d " << model.dim() << "\n";
  out << "pi ";
  vec(model.chain.pi);
  out << "trans\n";
  mat(model.chain.trans);
  for (int k = 0; k < model.num_states(); ++k) {
    const GhParams& e = model.emissions[k];
    out << "state " << k << "\n";
    out << "mu ";
    vec(e.mu());
    out << "lambda " << format_double(e.lambda()) << "\n";
    out << "chi " << format_double(e.chi()) << "\n";
    out << "psi " << format_double(e.psi()) << "\n";
    out << "sigma\n";
    mat(e.sigma());
    out << "theta\n";
    mat(e.theta());
  }
  if (!out) throw InputError("failed writing " + path.string());
}

namespace {

class TokenReader {
 public:
  TokenReader(std::istream& in, std::string name) : name_(std::move(name)) {
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens_.push_back(tok);
    }
  }

  void expect(const std::string& word) {
    const std::string got = next();
    if (got != word) throw InputError(name_ + ": expected '" + word + "', found '" + got + "'");
  }
  std::string next() {
    if (pos_ >= tokens_.size()) throw InputError(name_ + ": unexpected end of file");
    return tokens_[pos_++];
  }
  double number() {
    const std::string tok = next();
    const auto v = parse_number(tok);
    if (!v) throw InputError(name_ + ": expected a number, found '" + tok + "'");
    return *v;
  }
  int integer() {
    const double v = number();
    if (v != std::floor(v) || v < 0 || v > 1e6) throw InputError(name_ + ": expected a count");
    return static_cast<int>(v);
  }
  Eigen::VectorXd vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = number();
    return v;
  }
  Eigen::MatrixXd matrix(int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = number();
    }
    return m;
  }

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

HmghgmModel read_model(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  TokenReader tr(in, path.string());
  tr.expect("K");
  const int K = tr.integer();
  tr.expect("d");
  const int d = tr.integer();
  if (K < 1 || d < 1) throw InputError(path.string() + ": K and d must be positive");
  HmghgmModel model;
  tr.expect("pi");
  model.chain.pi = tr.vector(K);
  tr.expect("trans");
  model.chain.trans = tr.matrix(K, K);
  try {
    model.chain.validate();
  } catch (const std::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  for (int k = 0; k < K; ++k) {
    tr.expect("state");
    if (tr.integer() != k) throw InputError(path.string() + ": states out of order");
    tr.expect("mu");
    Eigen::VectorXd mu = tr.vector(d);
    ShapeParams shape;
    tr.expect("lambda");
    shape.lambda = tr.number();
    tr.expect("chi");
    shape.chi = tr.number();
    tr.expect("psi");
    shape.psi = tr.number();
    tr.expect("sigma");
    tr.matrix(d, d);
    tr.expect("theta");
    const Eigen::MatrixXd theta = tr.matrix(d, d);
    try {
      model.emissions.push_back(GhParams::from_precision(std::move(mu), theta, shape));
    } catch (const std::exception& e) {
      throw InputError(path.string() + ": state " + std::to_string(k) + ": " + e.what());
    }
  }
  return model;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InputError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

std::optional<std::string> RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) throw InputError("config key " + key + ": expected an integer, got '" + *v + "'");
  return out;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  const auto d = parse_number(*v);
  if (!d) throw InputError("config key " + key + ": expected a number, got '" + *v + "'");
  return *d;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw InputError("config key " + key + ": expected a boolean, got '" + *v + "'");
}

std::vector<int> parse_k_spec(const std::string& spec) {
  auto to_int = [&spec](const std::string& s) {
    int v = 0;
    const std::string t = trim(s);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || v < 1) throw InputError("bad K specification '" + spec + "'");
    return v;
  };
  std::vector<int> out;
  const auto dash = spec.find('-');
  if (dash != std::string::npos) {
    const int lo = to_int(spec.substr(0, dash));
    const int hi = to_int(spec.substr(dash + 1));
    if (hi < lo) throw InputError("bad K range '" + spec + "'");
    for (int k = lo; k <= hi; ++k) out.push_back(k);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(item));
  if (out.empty()) throw InputError("empty K specification");
  return out;
}

std::vector<double> parse_rho_spec(const std::string& spec) {
  auto num = [&spec](const std::string& s) {
    const auto v = parse_number(s);
    if (!v || !(*v >= 0.0)) throw InputError("bad rho specification '" + spec + "'");
    return *v;
  };
  if (spec.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(trim(item));
    if (parts.size() != 3 && parts.size() != 4) throw InputError("bad rho grid '" + spec + "'");
    const double lo = num(parts[0]);
    const double hi = num(parts[1]);
    const double n = num(parts[2]);
    if (n < 1 || n != std::floor(n)) throw InputError("bad rho grid size in '" + spec + "'");
    GridShape shape = GridShape::log_spaced;
    if (parts.size() == 4) {
      if (parts[3] == "lin") {
        shape = GridShape::equispaced;
      } else if (parts[3] != "log") {
        throw InputError("rho grid shape must be log or lin in '" + spec + "'");
      }
    }
    try {
      return rho_grid(lo, hi, static_cast<int>(n), shape);
    } catch (const std::invalid_argument& e) {
      throw InputError("bad rho grid '" + spec + "': " + e.what());
    }
  }
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(num(item));
  if (out.empty()) throw InputError("empty rho specification");
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace hmghgm
