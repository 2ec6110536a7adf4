#ifndef MSGMRF_EXPERIMENTS_HPP
#define MSGMRF_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "msgmrf/sampler.hpp"
#include "msgmrf/scoring.hpp"

namespace msgmrf {

/// Fixed vs alternating tilings on the 99-coefficient AR(1) chain.
struct TilingStudyConfig {
  Eigen::Index n = 99;
  double phi = 0.9;
  double sigma_v_sq = 0.2;
  long iterations = 10000;
  long keep_last = 5000;
  long thin_factor = 2;
  Eigen::Index tracked_index = 48;  // eta^{49}, 1-based 49
  Eigen::Index acf_max_lag = 30;
  std::uint64_t seed = 1;
};

struct TilingStudyReport {
  Eigen::VectorXd acf_fixed;        // Sampler 1
  Eigen::VectorXd acf_alternating;  // Sampler 2
  double var_fixed = 0.0;
  double var_alternating = 0.0;
  double exact_variance = 0.0;
};

TilingStudyReport run_tiling_study(const TilingStudyConfig& config);
void write_tiling_study_csv(const TilingStudyReport& report,
                          const std::string& directory);

/// Two-scale piecewise-constant discretization study with an exact-kriging
/// oracle; predictions use the true parameters (no MCMC).
struct DiscretizationStudyConfig {
  int replicates = 100;
  double range0 = 0.4;        // tau_0 in the covariance C_k
  double range1 = 0.04;       // tau_1
  double sigma0_sq = 1.0;
  double sigma1_sq = 0.05;
  double noise_var = 2e-4;
  double gap_width = 0.2;
  std::vector<double> delta0_grid = {0.01, 0.05, 0.2};
  std::vector<double> delta1_grid = {0.001, 0.004, 0.009};
  std::uint64_t seed = 1;
  int workers = 1;
};

struct DiscretizationCell {
  double delta0 = 0.0;
  double delta1 = 0.0;
  double rmspe_dense = 0.0;  // validation points outside the gap
  double rmspe_gap = 0.0;    // validation points inside the gap
  double crps_dense = 0.0;
  double crps_gap = 0.0;
};

struct DiscretizationStudyReport {
  std::vector<DiscretizationCell> cells;
  DiscretizationCell oracle;  // exact kriging with the true covariance
  bool monotone_dense_in_delta1 = false;
  bool monotone_gap_in_delta0 = false;
};

DiscretizationStudyReport run_discretization_study(const DiscretizationStudyConfig& config);
void write_discretization_study_csv(const DiscretizationStudyReport& report,
                          const std::string& directory);

/// Desk-scale two-scale nonstationary fit on the unit square with a central
/// held-out box.
struct Fit2dConfig {
  double coarse_spacing = 0.05;
  double fine_spacing = 1.0 / 62.0;
  double param_spacing = 0.25;
  double eps_spacing = 0.25;
  long n_train = 2500;
  long n_validation = 1500;
  Box held_out{0.4, 0.6, 0.4, 0.6};
  double vicinity_halfwidth = 0.03;
  long iterations = 600;
  long burn_in = 300;
  long thin = 3;
  int workers = 1;
  std::uint64_t seed = 1;
  bool fix_parameters = false;  // hold all parameters at the truth
  double tile_extent = 0.25;
  int min_tile_data = 30;
  int min_tile_basis = 60;
  int footprint_rings = 0;
  // simulation truths
  double true_sigma0 = 1.0;
  double true_rho0 = 0.5;
  double true_sigma1_centre = 0.3;
  double true_rho1_centre = 0.08;
  double true_eps_sd = 0.1;
  double nonstat_slope = 0.5;  // linear drift of the log fields
};

struct Fit2dReport {
  std::vector<ScoreRow> scores;  // near / far / box / overall
  double cov90_overall = 0.0;
  double rmspe_overall = 0.0;
  // exact conjugate comparison on a subsample (fix_parameters runs)
  double rmspe_sampler_subsample = 0.0;
  double rmspe_kriging_subsample = 0.0;
  ChainOutput chain;
  PredictiveSummary predictions;
  Eigen::VectorXd validation_truth;
  ValidationSplit split;
};

Fit2dReport fit_2d_demo(const Fit2dConfig& config);
void write_fit_2d_csv(const Fit2dReport& report, const ModelSpec& spec,
                      const std::string& directory);

/// The demo's model spec and synthetic data, exposed for tests.
struct Fit2dProblem {
  ModelSpec spec;
  Eigen::MatrixXd validation_locations;
  Eigen::VectorXd validation_values;
};
Fit2dProblem build_fit_2d_problem(const Fit2dConfig& config);

}  // namespace msgmrf

#endif
