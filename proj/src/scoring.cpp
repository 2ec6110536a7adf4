#include "msgmrf/scoring.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "msgmrf/errors.hpp"
#include "msgmrf/params.hpp"

namespace msgmrf {

namespace {

void check_lengths(const PredictiveSummary& pred,
                   const Eigen::VectorXd& truth) {
  if (pred.mean.size() == 0) throw EmptySet("no predictions");
  if (pred.mean.size() != truth.size() || pred.std.size() != truth.size())
    throw DimensionMismatch("prediction/truth lengths");
}

}  // namespace

double rmspe(const PredictiveSummary& pred, const Eigen::VectorXd& truth) {
  check_lengths(pred, truth);
  return std::sqrt((pred.mean - truth).squaredNorm() / double(truth.size()));
}

double crps_gaussian(double mean, double std, double truth) {
  if (!(std > 0.0)) throw NonPositiveStd("crps needs std > 0");
  const double z = (truth - mean) / std;
  return std * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                1.0 / std::sqrt(M_PI));
}

double mean_crps(const PredictiveSummary& pred, const Eigen::VectorXd& truth) {
  check_lengths(pred, truth);
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    total += crps_gaussian(pred.mean[i], pred.std[i], truth[i]);
  return total / double(truth.size());
}

double interval_score(double mean, double std, double truth, double alpha) {
  if (!(std > 0.0)) throw NonPositiveStd("interval score needs std > 0");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidQuantiles("alpha must be in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double l = mean - z * std;
  const double u = mean + z * std;
  double score = u - l;
  if (truth < l) score += (2.0 / alpha) * (l - truth);
  if (truth > u) score += (2.0 / alpha) * (truth - u);
  return score;
}

double mean_interval_score(const PredictiveSummary& pred,
                           const Eigen::VectorXd& truth, double alpha) {
  check_lengths(pred, truth);
  double total = 0.0;
  for (Eigen::Index i = 0; i < truth.size(); ++i)
    total += interval_score(pred.mean[i], pred.std[i], truth[i], alpha);
  return total / double(truth.size());
}

double coverage(const PredictiveSummary& pred, const Eigen::VectorXd& truth,
                double level) {
  check_lengths(pred, truth);
  if (!(level >= 0.0 && level < 1.0))
    throw InvalidQuantiles("level must be in [0,1)");
  if (level == 0.0) return 0.0;
  const double z = normal_quantile(0.5 + level / 2.0);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (!(pred.std[i] > 0.0)) throw NonPositiveStd("coverage needs std > 0");
    if (std::abs(truth[i] - pred.mean[i]) <= z * pred.std[i]) ++hits;
  }
  return double(hits) / double(truth.size());
}

ValidationSplit split_validation(const Eigen::MatrixXd& train_locations,
                                 const Eigen::MatrixXd& validation_locations,
                                 const Box& held_out_box,
                                 double vicinity_halfwidth) {
  const bool two_d = validation_locations.cols() >= 2;
  ValidationSplit out;
  for (Eigen::Index i = 0; i < validation_locations.rows(); ++i) {
    const double x = validation_locations(i, 0);
    const double y = two_d ? validation_locations(i, 1) : 0.0;
    if (held_out_box.contains(x, y)) {
      out.held_out_box.push_back(static_cast<int>(i));
      continue;
    }
    bool near = false;
    for (Eigen::Index t = 0; t < train_locations.rows() && !near; ++t) {
      const double dx = std::abs(train_locations(t, 0) - x);
      const double dy =
          two_d ? std::abs(train_locations(t, 1) - y) : 0.0;
      near = dx <= vicinity_halfwidth && dy <= vicinity_halfwidth;
    }
    if (near)
      out.near_data.push_back(static_cast<int>(i));
    else
      out.far_data.push_back(static_cast<int>(i));
  }
  return out;
}

ScoreRow score_all(const std::string& dataset, const std::string& model,
                   const PredictiveSummary& pred,
                   const Eigen::VectorXd& truth) {
  ScoreRow row;
  row.dataset = dataset;
  row.model = model;
  row.rmspe = rmspe(pred, truth);
  row.crps = mean_crps(pred, truth);
  row.is90 = mean_interval_score(pred, truth, 0.1);
  row.cov90 = coverage(pred, truth, 0.9);
  return row;
}

void write_score_table_csv(const std::vector<ScoreRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "dataset,model,RMSPE,CRPS,IS90,Cov90\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.dataset << "," << r.model << "," << r.rmspe << "," << r.crps
        << "," << r.is90 << "," << r.cov90 << "\n";
}

PredictiveSummary read_predictions_csv(const std::string& path,
                                       Eigen::Index n_locations) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string header;
  std::getline(in, header);
  if (header.find("location_id") == std::string::npos ||
      header.find("mean") == std::string::npos ||
      header.find("std") == std::string::npos)
    throw MissingColumn("expected header location_id,mean,std");
  PredictiveSummary pred;
  pred.mean = Eigen::VectorXd::Zero(n_locations);
  pred.std = Eigen::VectorXd::Zero(n_locations);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    long id = 0;
    double mean = 0.0, sd = 0.0;
    try {
      std::getline(ss, tok, ',');
      id = std::stol(tok);
      std::getline(ss, tok, ',');
      mean = std::stod(tok);
      std::getline(ss, tok, ',');
      sd = std::stod(tok);
    } catch (const std::exception&) {
      throw MalformedRow(line_no, line);
    }
    if (id < 1 || id > n_locations) throw MalformedRow(line_no, "bad id");
    pred.mean[id - 1] = mean;
    pred.std[id - 1] = sd;
  }
  return pred;
}

void write_predictions_csv(const PredictiveSummary& pred,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "location_id,mean,std\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < pred.mean.size(); ++i)
    out << (i + 1) << "," << pred.mean[i] << "," << pred.std[i] << "\n";
}

}  // namespace msgmrf
