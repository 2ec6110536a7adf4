#ifndef MSGMRF_IO_HPP
#define MSGMRF_IO_HPP

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace msgmrf {

/// Point-referenced measurements: locations (m x 1 or m x 2) and values.
struct PointData {
  Eigen::MatrixXd locations;
  Eigen::VectorXd values;
  std::size_t dropped_rows = 0;  // non-finite rows discarded on load

  Eigen::Index size() const { return values.size(); }
  int dimension() const { return static_cast<int>(locations.cols()); }
};

/// Reads "x,value" (1D) or "x,y,value" (2D) with a header line. Rows with
/// non-finite entries are dropped and counted.
PointData read_points_csv(const std::string& path);
void write_points_csv(const PointData& data, const std::string& path);

struct DetrendResult {
  PointData residuals;
  Eigen::Vector3d coefficients;  // intercept, latitude, latitude^2
};

/// Ordinary least squares on (1, y, y^2) where y is the last coordinate.
DetrendResult detrend(const PointData& data);

/// Flat key = value configuration ('#' comments, later keys win).
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int_or(const std::string& key, long fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;
  std::vector<double> get_list_or(const std::string& key,
                                  const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);
  void set_int(const std::string& key, long value);

  /// Every key this config was asked for, with the resolved value; writing
  /// it back yields a config that reproduces the run.
  const std::map<std::string, std::string>& resolved() const {
    return resolved_;
  }
  void write_echo(const std::string& path) const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

void ensure_directory(const std::string& path);

}  // namespace msgmrf

#endif
