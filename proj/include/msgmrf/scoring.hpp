#ifndef MSGMRF_SCORING_HPP
#define MSGMRF_SCORING_HPP

#include <string>
#include <vector>

#include <Eigen/Core>

namespace msgmrf {

/// Per-location predictive mean and standard deviation of the noisy
/// process (measurement error included when scoring against data).
struct PredictiveSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

double rmspe(const PredictiveSummary& pred, const Eigen::VectorXd& truth);

/// Closed-form CRPS of a Gaussian predictive:
/// sigma * (z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)), z = (y - mu)/sigma.
double crps_gaussian(double mean, double std, double truth);
double mean_crps(const PredictiveSummary& pred, const Eigen::VectorXd& truth);

/// Central (1-alpha) interval score.
double interval_score(double mean, double std, double truth,
                      double alpha = 0.1);
double mean_interval_score(const PredictiveSummary& pred,
                           const Eigen::VectorXd& truth, double alpha = 0.1);

/// Fraction of truths inside the central `level` predictive interval.
double coverage(const PredictiveSummary& pred, const Eigen::VectorXd& truth,
                double level = 0.9);

/// Validation indices split by terrain: inside the held-out box, near
/// training data (some training point within the vicinity box), or far.
struct ValidationSplit {
  std::vector<int> near_data;
  std::vector<int> far_data;
  std::vector<int> held_out_box;
};

struct Box {
  double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0;
  bool contains(double x, double y) const {
    return x >= xlo && x <= xhi && y >= ylo && y <= yhi;
  }
};

ValidationSplit split_validation(const Eigen::MatrixXd& train_locations,
                                 const Eigen::MatrixXd& validation_locations,
                                 const Box& held_out_box,
                                 double vicinity_halfwidth);

struct ScoreRow {
  std::string dataset;
  std::string model;
  double rmspe = 0.0;
  double crps = 0.0;
  double is90 = 0.0;
  double cov90 = 0.0;
};

ScoreRow score_all(const std::string& dataset, const std::string& model,
                   const PredictiveSummary& pred, const Eigen::VectorXd& truth);

void write_score_table_csv(const std::vector<ScoreRow>& rows,
                           const std::string& path);

/// External predictions file: header location_id,mean,std (1-based ids into
/// the truth vector).
PredictiveSummary read_predictions_csv(const std::string& path,
                                       Eigen::Index n_locations);
void write_predictions_csv(const PredictiveSummary& pred,
                           const std::string& path);

}  // namespace msgmrf

#endif
