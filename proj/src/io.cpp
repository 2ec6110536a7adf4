#include "msgmrf/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "msgmrf/errors.hpp"

namespace msgmrf {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

}  // namespace

PointData read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  if (!std::getline(in, header)) throw MissingColumn("empty file " + path);
  const auto cols = split_csv(header);
  int dim = 0;
  if (cols.size() == 2 && cols[0] == "x" && cols[1] == "value")
    dim = 1;
  else if (cols.size() == 3 && cols[0] == "x" && cols[1] == "y" &&
           cols[2] == "value")
    dim = 2;
  else
    throw MissingColumn("expected header 'x,value' or 'x,y,value' in " + path);

  std::vector<std::array<double, 3>> rows;
  std::string line;
  std::size_t line_no = 1;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto toks = split_csv(line);
    if (toks.size() != static_cast<std::size_t>(dim) + 1)
      throw MalformedRow(line_no, line);
    std::array<double, 3> row{0.0, 0.0, 0.0};
    try {
      for (std::size_t c = 0; c < toks.size(); ++c)
        row[c] = std::stod(toks[c]);
    } catch (const std::exception&) {
      throw MalformedRow(line_no, line);
    }
    bool finite = true;
    for (std::size_t c = 0; c <= static_cast<std::size_t>(dim); ++c)
      finite = finite && std::isfinite(row[c]);
    if (!finite) {
      ++dropped;
      continue;
    }
    rows.push_back(row);
  }
  PointData out;
  out.dropped_rows = dropped;
  out.locations.resize(static_cast<Eigen::Index>(rows.size()), dim);
  out.values.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.locations(static_cast<Eigen::Index>(r), 0) = rows[r][0];
    if (dim == 2) out.locations(static_cast<Eigen::Index>(r), 1) = rows[r][1];
    out.values[static_cast<Eigen::Index>(r)] = rows[r][dim];
  }
  return out;
}

void write_points_csv(const PointData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << (data.dimension() == 2 ? "x,y,value\n" : "x,value\n");
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << data.locations(i, 0);
    if (data.dimension() == 2) out << "," << data.locations(i, 1);
    out << "," << data.values[i] << "\n";
  }
}

DetrendResult detrend(const PointData& data) {
  const Eigen::Index m = data.size();
  if (m < 3) throw RankDeficient("need >= 3 points to detrend");
  const Eigen::Index ycol = data.locations.cols() - 1;
  Eigen::MatrixXd design(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double y = data.locations(i, ycol);
    design(i, 0) = 1.0;
    design(i, 1) = y;
    design(i, 2) = y * y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 3) throw RankDeficient("covariates are collinear");
  const Eigen::Vector3d beta = qr.solve(data.values);
  DetrendResult out;
  out.coefficients = beta;
  out.residuals = data;
  out.residuals.values = data.values - design * beta;
  return out;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

Config Config::from_string(const std::string& text) {
  Config out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' at line " +
                        std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key at line " +
                                       std::to_string(line_no));
    out.values_[key] = value;
  }
  return out;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key " + key);
  resolved_[key] = it->second;
  return it->second;
}

std::string Config::get_or(const std::string& key,
                           const std::string& fallback) const {
  const auto it = values_.find(key);
  const std::string value = it == values_.end() ? fallback : it->second;
  resolved_[key] = value;
  return value;
}

double Config::get_double(const std::string& key) const {
  return std::stod(get(key));
}

double Config::get_double_or(const std::string& key, double fallback) const {
  std::ostringstream def;
  def.precision(17);
  def << fallback;
  return std::stod(get_or(key, def.str()));
}

long Config::get_int(const std::string& key) const {
  return std::stol(get(key));
}

long Config::get_int_or(const std::string& key, long fallback) const {
  return std::stol(get_or(key, std::to_string(fallback)));
}

bool Config::get_bool_or(const std::string& key, bool fallback) const {
  const std::string v = get_or(key, fallback ? "true" : "false");
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for " + key + ": " + v);
}

std::vector<double> Config::get_list_or(
    const std::string& key, const std::vector<double>& fallback) const {
  std::ostringstream def;
  def.precision(17);
  for (std::size_t i = 0; i < fallback.size(); ++i)
    def << (i ? "," : "") << fallback[i];
  const std::string v = get_or(key, def.str());
  std::vector<double> out;
  std::istringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

void Config::set_double(const std::string& key, double value) {
  std::ostringstream ss;
  ss.precision(17);
  ss << value;
  values_[key] = ss.str();
}

void Config::set_int(const std::string& key, long value) {
  values_[key] = std::to_string(value);
}

void Config::write_echo(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [key, value] : resolved_) out << key << " = " << value << "\n";
}

void ensure_directory(const std::string& path) {
  std::filesystem::create_directories(path);
}

}  // namespace msgmrf
